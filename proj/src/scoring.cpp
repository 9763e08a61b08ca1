#include "sidwatch/scoring.hpp"

#include "sidwatch/errors.hpp"
#include "sidwatch/manifest.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace sidwatch {

DetectorId DetectorId::parse_label(std::string_view label) {
    const auto colon = label.find(':');
    if (colon == std::string_view::npos) return {std::string(label), {}};
    return {std::string(label.substr(0, colon)), std::string(label.substr(colon + 1))};
}

void ScoreTable::set(const DetectorId& detector, const std::string& image_id, double score) {
    if (!(score >= 0.0 && score <= 1.0))
        throw std::out_of_range("score " + std::to_string(score) + " for '" + image_id + "' outside [0,1]");
    if (!columns_[detector].emplace(image_id, score).second)
        throw std::invalid_argument("duplicate score for (" + detector.label() + ", " + image_id + ")");
}

std::optional<double> ScoreTable::get(const DetectorId& detector, std::string_view image_id) const {
    const auto col = columns_.find(detector);
    if (col == columns_.end()) return std::nullopt;
    const auto it = col->second.find(std::string(image_id));
    if (it == col->second.end()) return std::nullopt;
    return it->second;
}

std::vector<DetectorId> ScoreTable::detectors() const {
    std::vector<DetectorId> out;
    for (const auto& [d, col] : columns_)
        if (!col.empty()) out.push_back(d);
    return out;
}

const ScoreTable::Column& ScoreTable::column(const DetectorId& detector) const {
    static const Column empty;
    const auto it = columns_.find(detector);
    return it == columns_.end() ? empty : it->second;
}

std::set<std::string> ScoreTable::coverage(const DetectorId& detector) const {
    std::set<std::string> out;
    for (const auto& [id, s] : column(detector)) out.insert(id);
    return out;
}

std::size_t ScoreTable::size() const {
    std::size_t n = 0;
    for (const auto& [d, col] : columns_) n += col.size();
    return n;
}

void ScoreTable::merge(const ScoreTable& other) {
    for (const auto& [d, col] : other.columns_)
        for (const auto& [id, s] : col) set(d, id, s);
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    while (true) {
        const auto tab = line.find('\t');
        out.push_back(line.substr(0, tab));
        if (tab == std::string_view::npos) break;
        line.remove_prefix(tab + 1);
    }
    return out;
}

std::optional<double> parse_double(std::string_view text) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

} // namespace

ScoreTable read_scores(std::istream& in, const std::string& source, const ScoreLoadOptions& options,
                       std::vector<std::string>* warnings) {
    ScoreTable table;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 4 || fields[0].empty() || fields[2].empty())
            throw ParseError(source, n, "expected 'detector<TAB>variant<TAB>image_id<TAB>score'");
        const DetectorId detector{std::string(fields[0]), std::string(fields[1])};
        const std::string id(fields[2]);
        const auto score = parse_double(fields[3]);
        if (!score) throw ParseError(source, n, "unparsable score '" + std::string(fields[3]) + "'");
        if (!(*score >= 0.0 && *score <= 1.0))
            throw ParseError(source, n, "score " + std::string(fields[3]) + " out of range [0,1]");
        if (options.manifest && !options.manifest->find(id)) {
            if (options.strict_ids) throw ParseError(source, n, "unknown image id '" + id + "'");
            if (warnings) warnings->push_back(source + ":" + std::to_string(n) + ": unknown image id '" + id + "' dropped");
            continue;
        }
        if (table.get(detector, id))
            throw ParseError(source, n, "duplicate row for (" + detector.label() + ", " + id + ")");
        table.set(detector, id, *score);
    }
    return table;
}

ScoreTable load_scores(const std::filesystem::path& path, const ScoreLoadOptions& options,
                       std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open score file '" + path.string() + "'");
    return read_scores(in, path.string(), options, warnings);
}

void write_scores(const ScoreTable& table, std::ostream& out) {
    char buf[32];
    for (const auto& d : table.detectors()) {
        for (const auto& [id, s] : table.column(d)) {
            std::snprintf(buf, sizeof buf, "%.6f", s);
            out << d.name << '\t' << d.variant << '\t' << id << '\t' << buf << '\n';
        }
    }
}

namespace {

class ChildProcess {
public:
    explicit ChildProcess(const std::string& command) {
        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
            throw ProtocolError(std::string("socketpair failed: ") + std::strerror(errno));
        pid_ = ::fork();
        if (pid_ < 0) {
            ::close(fds[0]);
            ::close(fds[1]);
            throw ProtocolError(std::string("fork failed: ") + std::strerror(errno));
        }
        if (pid_ == 0) {
            ::dup2(fds[1], STDIN_FILENO);
            ::dup2(fds[1], STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(fds[1]);
        fd_ = fds[0];
        ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL) | O_NONBLOCK);
    }

    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;

    ~ChildProcess() {
        if (fd_ >= 0) ::close(fd_);
        if (pid_ > 0 && !reaped_) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
        }
    }

    int fd() const { return fd_; }

    void kill() {
        if (pid_ > 0 && !reaped_) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status_, 0);
            reaped_ = true;
        }
    }

    // Returns the wait status, or nullopt if the child is still running at the deadline.
    std::optional<int> wait_until(std::chrono::steady_clock::time_point deadline) {
        while (!reaped_) {
            const pid_t r = ::waitpid(pid_, &status_, WNOHANG);
            if (r == pid_) {
                reaped_ = true;
                break;
            }
            if (r < 0 && errno != EINTR) {
                reaped_ = true;
                status_ = -1;
                break;
            }
            if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        return status_;
    }

private:
    pid_t pid_ = -1;
    int fd_ = -1;
    int status_ = 0;
    bool reaped_ = false;
};

struct ResponseParser {
    const DetectorId& detector;
    const std::unordered_map<std::string, std::size_t>& requested;
    SubprocessResult result;
    std::set<std::string> answered;
    std::size_t line_no = 0;

    [[noreturn]] void violation(const std::string& line, const std::string& why) const {
        throw ProtocolError("detector '" + detector.label() + "' protocol violation at output line " +
                            std::to_string(line_no) + " ('" + line + "'): " + why);
    }

    void feed(const std::string& raw) {
        ++line_no;
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) return;
        const auto fields = split_tabs(line);
        if (fields.size() < 2 || fields[0].empty()) violation(line, "expected 'image_id<TAB>score'");
        const std::string id(fields[0]);
        if (!requested.contains(id)) violation(line, "unexpected image id '" + id + "'");
        if (!answered.insert(id).second) violation(line, "duplicate answer for '" + id + "'");
        if (fields[1] == "ERROR") {
            result.failures.emplace_back(id, fields.size() > 2 ? std::string(fields[2]) : std::string("unspecified"));
            return;
        }
        if (fields.size() != 2) violation(line, "expected 'image_id<TAB>score'");
        const auto score = parse_double(fields[1]);
        if (!score) violation(line, "unparsable score");
        if (!(*score >= 0.0 && *score <= 1.0)) violation(line, "score outside [0,1]");
        result.fragment.set(detector, id, *score);
    }
};

std::string missing_list(const std::span<const ScoreRequest> requests, const std::set<std::string>& answered) {
    std::string out;
    for (const auto& r : requests) {
        if (answered.contains(r.image_id)) continue;
        if (!out.empty()) out += ", ";
        out += r.image_id;
    }
    return out;
}

} // namespace

SubprocessResult score_via_subprocess(const DetectorEndpoint& endpoint, std::span<const ScoreRequest> requests) {
    std::unordered_map<std::string, std::size_t> requested;
    std::string payload;
    for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto& r = requests[i];
        if (r.image_id.find_first_of("\t\n") != std::string::npos)
            throw std::invalid_argument("image id contains a tab or newline: '" + r.image_id + "'");
        if (!requested.emplace(r.image_id, i).second)
            throw std::invalid_argument("image id requested twice: '" + r.image_id + "'");
        payload += r.image_id;
        payload += '\t';
        payload += std::filesystem::absolute(r.path).lexically_normal().string();
        payload += '\n';
    }

    ResponseParser parser{endpoint.detector, requested, {}, {}, 0};
    const auto deadline = std::chrono::steady_clock::now() + endpoint.timeout;
    ChildProcess child(endpoint.location);

    std::size_t sent = 0;
    bool writing = true;
    if (payload.empty()) {
        ::shutdown(child.fd(), SHUT_WR);
        writing = false;
    }
    std::string pending;
    bool eof = false;
    char buf[1 << 14];
    while (!eof) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            child.kill();
            std::istringstream partial(pending);
            try {
                for (std::string line; std::getline(partial, line);)
                    if (partial) parser.feed(line);
            } catch (const ProtocolError&) {
            }
            throw ProtocolError("detector '" + endpoint.detector.label() + "' timed out after " +
                                std::to_string(endpoint.timeout.count()) + " s; missing ids: " +
                                missing_list(requests, parser.answered));
        }
        pollfd pfd{child.fd(), static_cast<short>(POLLIN | (writing ? POLLOUT : 0)), 0};
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining + 1, 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (rc == 0) continue;
        if (writing && (pfd.revents & (POLLOUT | POLLERR | POLLHUP))) {
            const ssize_t n = ::send(child.fd(), payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
            if (n > 0) sent += static_cast<std::size_t>(n);
            // A child that stops reading early is allowed; its answers decide.
            if ((n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) || sent == payload.size()) {
                ::shutdown(child.fd(), SHUT_WR);
                writing = false;
            }
        }
        if (pfd.revents & (POLLIN | POLLHUP | POLLERR)) {
            const ssize_t n = ::recv(child.fd(), buf, sizeof buf, 0);
            if (n > 0) {
                pending.append(buf, static_cast<std::size_t>(n));
                std::size_t nl;
                while ((nl = pending.find('\n')) != std::string::npos) {
                    parser.feed(pending.substr(0, nl));
                    pending.erase(0, nl + 1);
                }
            } else if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)) {
                eof = true;
            }
        }
    }
    if (!pending.empty()) parser.feed(pending);

    const auto status = child.wait_until(deadline);
    if (!status) {
        child.kill();
        throw ProtocolError("detector '" + endpoint.detector.label() + "' timed out after " +
                            std::to_string(endpoint.timeout.count()) + " s waiting for exit");
    }
    if (!WIFEXITED(*status) || WEXITSTATUS(*status) != 0) {
        const std::string how = WIFEXITED(*status) ? "exited with status " + std::to_string(WEXITSTATUS(*status))
                                                   : "terminated by signal " + std::to_string(WTERMSIG(*status));
        throw ProtocolError("detector '" + endpoint.detector.label() + "' " + how);
    }
    if (parser.answered.size() != requests.size())
        throw ProtocolError("detector '" + endpoint.detector.label() + "' gave no answer for: " +
                            missing_list(requests, parser.answered));
    return std::move(parser.result);
}

SubprocessResult collect_scores(std::span<const DetectorEndpoint> endpoints, std::span<const ScoreRequest> requests,
                                const ScoreLoadOptions& options) {
    SubprocessResult merged;
    std::vector<std::future<SubprocessResult>> children;
    for (const auto& ep : endpoints) {
        if (ep.kind == DetectorEndpoint::Kind::score_file) {
            merged.fragment.merge(load_scores(ep.location, options));
        } else {
            children.push_back(std::async(std::launch::async, [&ep, requests] { return score_via_subprocess(ep, requests); }));
        }
    }
    // Join everything before rethrowing so no child outlives the call.
    std::exception_ptr first_error;
    for (auto& f : children) {
        try {
            auto r = f.get();
            merged.fragment.merge(r.fragment);
            merged.failures.insert(merged.failures.end(), r.failures.begin(), r.failures.end());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);
    return merged;
}

std::vector<MissingScore> check_coverage(const ScoreTable& table, std::span<const std::string> image_ids,
                                         std::span<const DetectorId> detectors) {
    std::vector<MissingScore> out;
    for (const auto& d : detectors)
        for (const auto& id : image_ids)
            if (!table.get(d, id)) out.push_back({d, id});
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace sidwatch
