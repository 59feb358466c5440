#pragma once

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "clear/dataset.hpp"
#include "clear/error.hpp"
#include "clear/models.hpp"

namespace clear {

/// Line protocol spoken with an external model process (see
/// docs/external_model_protocol.md):
///
///   request:  one line per observation, values in schema order joined by
///             ',' (numerics as %.17g, categoricals as level names), then an
///             empty line.
///   response: one line per observation, class probabilities joined by ',',
///             then an empty line.
///
/// Every line ends with '\n'.
namespace protocol {

inline std::string format_request(std::span<const Observation> batch,
                                  const std::vector<FeatureSpec>& features) {
    std::string out;
    char buf[64];
    for (const auto& obs : batch) {
        for (std::size_t j = 0; j < obs.size(); ++j) {
            if (j) out += ',';
            if (features[j].is_numeric()) {
                std::snprintf(buf, sizeof buf, "%.17g", obs[j]);
                out += buf;
            } else {
                out += features[j].levels.at(static_cast<std::size_t>(obs[j]));
            }
        }
        out += '\n';
    }
    out += '\n';
    return out;
}

/// Parses one response line. Throws ProtocolError on malformed content.
inline std::vector<double> parse_response_line(const std::string& line, std::size_t classes) {
    std::vector<double> row;
    for (const auto& tok : detail::split_csv_line(line)) {
        auto v = detail::parse_real(tok);
        if (!v) throw ProtocolError("unparseable probability '" + tok + "' in line '" + line + "'");
        row.push_back(*v);
    }
    if (row.size() != classes)
        throw ProtocolError("expected " + std::to_string(classes) + " probabilities, got " +
                            std::to_string(row.size()) + " in line '" + line + "'");
    return row;
}

/// Rows whose sum is off by at most `tolerance` are rescaled (returns true);
/// larger deviations or out-of-range entries raise NormalizationError.
inline bool normalize_row(std::vector<double>& row, double tolerance = 1e-3) {
    double sum = 0.0;
    for (double p : row) {
        if (p < 0.0 || p > 1.0 + tolerance)
            throw NormalizationError("probability " + std::to_string(p) + " outside [0, 1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance)
        throw NormalizationError("probability row sums to " + std::to_string(sum));
    if (std::abs(sum - 1.0) <= 1e-12) return false;
    for (double& p : row) p = std::min(1.0, p / sum);
    return true;
}

}  // namespace protocol

/// Proxies predictions to a child process started with `/bin/sh -c command`.
/// Calls are serialized; concurrent callers queue on an internal mutex.
class ExternalClassifier final : public Classifier {
public:
    ExternalClassifier(std::string command, std::vector<FeatureSpec> features, std::size_t classes)
        : command_(std::move(command)), features_(std::move(features)), classes_(classes) {
        std::signal(SIGPIPE, SIG_IGN);
        start();
    }

    ~ExternalClassifier() override { stop(); }

    ExternalClassifier(const ExternalClassifier&) = delete;
    ExternalClassifier& operator=(const ExternalClassifier&) = delete;

    std::size_t class_count() const override { return classes_; }
    std::size_t feature_count() const override { return features_.size(); }

    /// Number of rows that were rescaled because their sum was slightly off.
    std::size_t warning_count() const {
        std::lock_guard lock(mutex_);
        return warnings_;
    }

protected:
    ProbabilityMatrix predict_batch(std::span<const Observation> batch) const override {
        std::lock_guard lock(mutex_);
        if (pid_ <= 0) throw TransportError("external model process is not running");
        const std::string request = protocol::format_request(batch, features_);
        const auto lines = exchange(request, batch.size());

        ProbabilityMatrix p(static_cast<Eigen::Index>(batch.size()),
                            static_cast<Eigen::Index>(classes_));
        for (std::size_t i = 0; i < lines.size(); ++i) {
            auto row = protocol::parse_response_line(lines[i], classes_);
            if (protocol::normalize_row(row)) {
                ++warnings_;
                std::fprintf(stderr, "warning: external model row %zu renormalized\n", i);
            }
            for (std::size_t k = 0; k < classes_; ++k)
                p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
        }
        return p;
    }

private:
    void start() {
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw TransportError(std::string("pipe failed: ") + std::strerror(errno));
        pid_ = fork();
        if (pid_ < 0) throw TransportError(std::string("fork failed: ") + std::strerror(errno));
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
        fcntl(write_fd_, F_SETFL, fcntl(write_fd_, F_GETFL) | O_NONBLOCK);
    }

    void stop() {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        write_fd_ = read_fd_ = -1;
        if (pid_ > 0) {
            int status = 0;
            for (int i = 0; i < 50; ++i) {
                if (waitpid(pid_, &status, WNOHANG) != 0) {
                    pid_ = -1;
                    return;
                }
                usleep(10000);
            }
            kill(pid_, SIGKILL);
            waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    /// Writes the request while draining responses, so a child that answers
    /// line by line cannot deadlock on a full pipe. Returns exactly
    /// `expected` response lines; the terminating empty line is consumed.
    std::vector<std::string> exchange(const std::string& request, std::size_t expected) const {
        std::size_t written = 0;
        std::vector<std::string> lines;
        bool terminated = false;
        while (!terminated) {
            pollfd fds[2];
            nfds_t nfds = 0;
            fds[nfds++] = {read_fd_, POLLIN, 0};
            const bool writing = written < request.size();
            if (writing) fds[nfds++] = {write_fd_, POLLOUT, 0};
            if (poll(fds, nfds, 30000) <= 0)
                throw TransportError("external model timed out or poll failed");
            if (writing && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
                ssize_t n = write(write_fd_, request.data() + written, request.size() - written);
                if (n < 0 && errno != EAGAIN) {
                    mark_dead();
                    throw TransportError("external model closed its input (process exited?)");
                }
                if (n > 0) written += static_cast<std::size_t>(n);
            }
            if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
                char buf[65536];
                ssize_t n = read(read_fd_, buf, sizeof buf);
                if (n <= 0) {
                    mark_dead();
                    throw TransportError("external model process exited mid-batch after " +
                                         std::to_string(lines.size()) + " of " +
                                         std::to_string(expected) + " rows");
                }
                pending_.append(buf, static_cast<std::size_t>(n));
                std::size_t pos;
                while (!terminated && (pos = pending_.find('\n')) != std::string::npos) {
                    std::string line = pending_.substr(0, pos);
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    pending_.erase(0, pos + 1);
                    if (line.empty()) {
                        terminated = true;
                    } else {
                        lines.push_back(std::move(line));
                    }
                }
            }
        }
        if (lines.size() != expected) {
            pending_.clear();
            throw ProtocolError("external model answered " + std::to_string(lines.size()) +
                                " rows for a batch of " + std::to_string(expected));
        }
        return lines;
    }

    void mark_dead() const {
        int status = 0;
        if (pid_ > 0) waitpid(pid_, &status, 0);
        pid_ = -1;
    }

    std::string command_;
    std::vector<FeatureSpec> features_;
    std::size_t classes_;
    mutable std::mutex mutex_;
    mutable pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    mutable std::string pending_;
    mutable std::size_t warnings_ = 0;
};

/// Starts `command` and returns a handle speaking the line protocol.
inline ClassifierHandle wrap_external(const std::string& command,
                                      const std::vector<FeatureSpec>& features,
                                      std::size_t class_count) {
    if (class_count < 2) throw PreconditionError("external model needs at least two classes");
    return std::make_shared<ExternalClassifier>(command, features, class_count);
}

}  // namespace clear
