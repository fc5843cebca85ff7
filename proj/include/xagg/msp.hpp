#pragma once

// MSP/1: newline-delimited JSON over a child process's stdin/stdout. One
// object per line, ids strictly increasing per connection, replies must echo
// the request id. Lets a model written in any framework serve predictions.
//
//   -> {"id":u64,"op":"meta"}                        <- {"id":u64,"d":int,"name":str,"gradient":bool}
//   -> {"id":u64,"op":"predict","inputs":[[f64..]..]} <- {"id":u64,"scores":[f64..]}
//   -> {"id":u64,"op":"gradient","input":[f64..]}     <- {"id":u64,"grad":[f64..]}
//   error reply: {"id":u64,"error":str}

#include <csignal>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "xagg/core.hpp"
#include "xagg/models.hpp"

namespace xagg {

class MspClient {
 public:
  static constexpr std::size_t kMaxBatch = 256;  // inputs per predict message

  explicit MspClient(const std::vector<std::string>& argv, int timeout_ms = 10000)
      : timeout_ms_(timeout_ms) {
    if (argv.empty()) throw InvalidInput("MspClient: empty command line");
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });
    spawn(argv);
    handshake();
  }

  ~MspClient() { shutdown(); }

  MspClient(const MspClient&) = delete;
  MspClient& operator=(const MspClient&) = delete;

  std::size_t input_dim() const { return dim_; }
  const std::string& model_name() const { return name_; }
  bool has_gradient() const { return gradient_; }

  std::vector<double> predict(const std::vector<std::vector<double>>& inputs) {
    std::lock_guard<std::mutex> lock(mutex_);
    std::vector<double> out;
    out.reserve(inputs.size());
    for (std::size_t off = 0; off < inputs.size(); off += kMaxBatch) {
      const std::size_t n = std::min(kMaxBatch, inputs.size() - off);
      nlohmann::json req;
      req["op"] = "predict";
      auto& arr = req["inputs"] = nlohmann::json::array();
      for (std::size_t i = 0; i < n; ++i) arr.push_back(inputs[off + i]);
      const nlohmann::json rep = roundtrip(req);
      if (!rep.contains("scores") || !rep["scores"].is_array() || rep["scores"].size() != n)
        throw ProtocolError("MSP: malformed predict reply");
      for (const auto& s : rep["scores"]) out.push_back(s.get<double>());
    }
    return out;
  }

  std::vector<double> gradient(const std::vector<double>& x) {
    std::lock_guard<std::mutex> lock(mutex_);
    nlohmann::json req;
    req["op"] = "gradient";
    req["input"] = x;
    const nlohmann::json rep = roundtrip(req);
    if (!rep.contains("grad") || !rep["grad"].is_array() || rep["grad"].size() != x.size())
      throw ProtocolError("MSP: malformed gradient reply");
    std::vector<double> g;
    g.reserve(x.size());
    for (const auto& v : rep["grad"]) g.push_back(v.get<double>());
    return g;
  }

 private:
  void spawn(const std::vector<std::string>& argv) {
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
      throw ModelUnavailable("MSP: pipe() failed");
    pid_ = ::fork();
    if (pid_ < 0) throw ModelUnavailable("MSP: fork() failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      std::vector<char*> cargv;
      for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      ::execvp(cargv[0], cargv.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
  }

  void handshake() {
    nlohmann::json req;
    req["op"] = "meta";
    nlohmann::json rep;
    try {
      rep = roundtrip(req);
    } catch (const ProtocolError&) {
      shutdown();
      throw;
    } catch (const ModelUnavailable&) {
      shutdown();
      throw;
    }
    if (!rep.contains("d") || !rep.contains("name") || !rep.contains("gradient")) {
      shutdown();
      throw ProtocolError("MSP: malformed meta reply");
    }
    dim_ = rep["d"].get<std::size_t>();
    name_ = rep["name"].get<std::string>();
    gradient_ = rep["gradient"].get<bool>();
  }

  nlohmann::json roundtrip(nlohmann::json req) {
    req["id"] = next_id_;
    const std::uint64_t id = next_id_++;
    write_line(req.dump());
    const std::string line = read_line();
    nlohmann::json rep;
    try {
      rep = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("MSP: reply is not valid JSON");
    }
    if (!rep.contains("id") || rep["id"].get<std::uint64_t>() != id)
      throw ProtocolError("MSP: reply id does not echo request id");
    if (rep.contains("error"))
      throw ProtocolError("MSP: server error: " + rep["error"].get<std::string>());
    return rep;
  }

  void write_line(std::string line) {
    line.push_back('\n');
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(in_fd_, line.data() + off, line.size() - off);
      if (n <= 0) throw ModelUnavailable("MSP: child closed stdin pipe");
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      struct pollfd pfd{out_fd_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, timeout_ms_);
      if (pr == 0) throw ModelUnavailable("MSP: reply timeout");
      if (pr < 0) throw ModelUnavailable("MSP: poll() failed");
      char chunk[4096];
      const ssize_t n = ::read(out_fd_, chunk, sizeof(chunk));
      if (n <= 0) throw ModelUnavailable("MSP: child closed stdout (process died?)");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() {
    if (in_fd_ >= 0) {
      ::close(in_fd_);
      in_fd_ = -1;
    }
    if (out_fd_ >= 0) {
      ::close(out_fd_);
      out_fd_ = -1;
    }
    if (pid_ > 0) {
      // Grace period after closing stdin, then force.
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        ::usleep(10000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  int timeout_ms_;
  int in_fd_ = -1, out_fd_ = -1;
  pid_t pid_ = -1;
  std::uint64_t next_id_ = 1;
  std::string buffer_;
  std::size_t dim_ = 0;
  std::string name_;
  bool gradient_ = false;
  std::mutex mutex_;
};

// Model adapter over an MSP/1 connection. Calls serialize on an internal
// mutex (inside MspClient); callers may share the proxy across threads.
class ExternalModel final : public Model {
 public:
  explicit ExternalModel(const std::vector<std::string>& argv, int timeout_ms = 10000)
      : client_(std::make_unique<MspClient>(argv, timeout_ms)) {}

  std::size_t input_dim() const override { return client_->input_dim(); }
  const std::string& name() const override { return client_->model_name(); }
  bool has_gradient() const override { return client_->has_gradient(); }

  std::vector<double> predict_batch(const std::vector<std::vector<double>>& inputs) const override {
    for (const auto& x : inputs) check_input(x);
    return client_->predict(inputs);
  }

  std::vector<double> gradient(const std::vector<double>& x) const override {
    if (!client_->has_gradient())
      throw Unsupported("external model does not advertise gradients");
    check_input(x);
    return client_->gradient(x);
  }

 private:
  std::unique_ptr<MspClient> client_;
};

inline std::unique_ptr<Model> external_model_connect(const std::vector<std::string>& argv,
                                                     int timeout_ms = 10000) {
  return std::make_unique<ExternalModel>(argv, timeout_ms);
}

}  // namespace xagg
