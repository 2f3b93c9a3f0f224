#include "halluc/decoder.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include <httplib.h>

#include "halluc/digest.hpp"
#include "halluc/htk.hpp"
#include "halluc/wire.hpp"

namespace halluc {

std::string decoder_kind_name(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::kTikhonov: return "tikhonov";
    case DecoderKind::kNearestFeasible: return "nearest_feasible";
    case DecoderKind::kFeasibleMean: return "feasible_mean";
    case DecoderKind::kConstant: return "constant";
    case DecoderKind::kFunction: return "function";
    case DecoderKind::kExternalSubprocess: return "external_subprocess";
    case DecoderKind::kExternalHttp: return "external_http";
    case DecoderKind::kCached: return "cached";
  }
  return "unknown";
}

FiniteSet Decoder::decode(const Tensor& y, std::size_t count, std::uint64_t seed) const {
  if (count < 1) throw ContractError("decode: count must be >= 1");
  y.require_finite("decoder input");
  std::vector<Tensor> out = decode_impl(y, count, seed);
  if (out.empty()) throw DecoderError(identity() + ": decoder returned no reconstruction");
  if (out.size() > count) out.resize(count);
  for (std::size_t i = out.size(), base = out.size(); i < count; ++i) out.push_back(out[i % base]);
  for (const Tensor& t : out) {
    if (!t.all_finite()) throw DecoderError(identity() + ": decoder returned non-finite values");
  }
  return FiniteSet(std::move(out));
}

FiniteSet DecoderHandle::decode(const Tensor& y, std::uint64_t seed) const { return decode(y, sample_count, seed); }

FiniteSet DecoderHandle::decode(const Tensor& y, std::size_t count, std::uint64_t seed) const {
  if (!decoder) throw ContractError("decoder handle is empty");
  return decoder->decode(y, count, seed);
}

FiniteSet decode(const DecoderHandle& h, const Tensor& y, std::size_t count, std::uint64_t seed) {
  return h.decode(y, count, seed);
}

// --- Tikhonov ------------------------------------------------------------------------

TikhonovResult tikhonov_reconstruct(const LinearForwardModel& model, const Tensor& y, double lambda, double tol,
                                    int max_iter) {
  if (!(lambda > 0.0)) throw ContractError("tikhonov: lambda must be positive");
  if (y.shape() != model.output_shape()) {
    throw ShapeError("tikhonov: expected measurement shape " + shape_to_string(model.output_shape()) + ", got " +
                     shape_to_string(y.shape()));
  }
  const bool complex = model.field() == Field::kComplex || y.is_complex();
  Tensor zero(model.input_shape(), complex ? Field::kComplex : Field::kReal);
  CglsOptions options;
  options.damping = lambda;
  options.tol = tol;
  options.max_iter = max_iter;
  CglsResult ls = cgls([&](const Tensor& u) { return model.apply(u); },
                       [&](const Tensor& r) { return model.adjoint(r); }, y, zero, options);
  TikhonovResult out;
  out.residual = l2_norm(model.apply(ls.solution) - y);
  out.solution = std::move(ls.solution);
  out.converged = ls.converged;
  out.iterations = ls.iterations;
  return out;
}

namespace {

class TikhonovDecoder final : public Decoder {
 public:
  TikhonovDecoder(ModelPtr model, double lambda, double tol, int max_iter)
      : model_(std::move(model)), lambda_(lambda), tol_(tol), max_iter_(max_iter) {
    if (!model_) throw ContractError("tikhonov decoder needs a model");
    if (!(lambda_ > 0.0)) throw ContractError("tikhonov: lambda must be positive");
  }
  DecoderKind kind() const override { return DecoderKind::kTikhonov; }
  std::string identity() const override {
    std::ostringstream s;
    s.precision(17);
    s << "tikhonov(" << model_kind_name(model_->kind()) << ",lambda=" << lambda_ << ")";
    return s.str();
  }

 protected:
  std::vector<Tensor> decode_impl(const Tensor& y, std::size_t, std::uint64_t) const override {
    return {tikhonov_reconstruct(*model_, y, lambda_, tol_, max_iter_).solution};
  }

 private:
  ModelPtr model_;
  double lambda_;
  double tol_;
  int max_iter_;
};

// Indices of feasible samples ordered by measurement residual, or the
// single nearest sample when none is feasible.
std::vector<std::pair<double, std::size_t>> feasible_by_residual(const PairedDataset& ds, const NoiseBall& noise,
                                                                 const Tensor& y) {
  if (y.shape() != ds.fxs.front().shape()) {
    throw ShapeError("decoder: expected measurement shape " + shape_to_string(ds.fxs.front().shape()) + ", got " +
                     shape_to_string(y.shape()));
  }
  std::vector<std::pair<double, std::size_t>> all(ds.fxs.size());
  for (std::size_t n = 0; n < ds.fxs.size(); ++n) all[n] = {roi_seminorm(ds.fxs[n], y, noise.norm), n};
  std::vector<std::pair<double, std::size_t>> feasible;
  for (const auto& e : all) {
    if (e.first < noise.epsilon + noise.slack) feasible.push_back(e);
  }
  if (feasible.empty()) feasible.push_back(*std::min_element(all.begin(), all.end()));
  std::sort(feasible.begin(), feasible.end());
  return feasible;
}

class DatasetDecoder final : public Decoder {
 public:
  DatasetDecoder(DecoderKind kind, std::shared_ptr<const PairedDataset> ds, NoiseBall noise)
      : kind_(kind), ds_(std::move(ds)), noise_(std::move(noise)) {
    if (!ds_) throw ContractError("dataset decoder needs a dataset");
    ds_->validate();
    noise_.validate();
  }
  DecoderKind kind() const override { return kind_; }
  std::string identity() const override {
    std::ostringstream s;
    s.precision(17);
    s << decoder_kind_name(kind_) << "(n=" << ds_->n_samples() << ",eps=" << noise_.epsilon << ")";
    return s.str();
  }

 protected:
  std::vector<Tensor> decode_impl(const Tensor& y, std::size_t, std::uint64_t) const override {
    auto members = feasible_by_residual(*ds_, noise_, y);
    if (kind_ == DecoderKind::kNearestFeasible) return {ds_->xs[members.front().second]};
    // Sum in index order so the mean does not depend on residual ties.
    std::vector<std::size_t> idx;
    for (const auto& m : members) idx.push_back(m.second);
    std::sort(idx.begin(), idx.end());
    Tensor mean = Tensor::zeros_like(ds_->xs[idx.front()]);
    for (std::size_t i : idx) mean += ds_->xs[i];
    mean *= 1.0 / static_cast<double>(idx.size());
    return {mean};
  }

 private:
  DecoderKind kind_;
  std::shared_ptr<const PairedDataset> ds_;
  NoiseBall noise_;
};

class ConstantDecoder final : public Decoder {
 public:
  explicit ConstantDecoder(Tensor z0) : z0_(std::move(z0)) { z0_.require_finite("constant decoder output"); }
  DecoderKind kind() const override { return DecoderKind::kConstant; }
  std::string identity() const override { return "constant(" + sha256_hex(htk::to_bytes(z0_)) + ")"; }

 protected:
  std::vector<Tensor> decode_impl(const Tensor&, std::size_t, std::uint64_t) const override { return {z0_}; }

 private:
  Tensor z0_;
};

class FunctionDecoder final : public Decoder {
 public:
  FunctionDecoder(std::string name, DecodeFn fn) : name_(std::move(name)), fn_(std::move(fn)) {
    if (!fn_) throw ContractError("function decoder needs a callable");
  }
  DecoderKind kind() const override { return DecoderKind::kFunction; }
  std::string identity() const override { return "function(" + name_ + ")"; }

 protected:
  std::vector<Tensor> decode_impl(const Tensor& y, std::size_t count, std::uint64_t seed) const override {
    return fn_(y, count, seed);
  }

 private:
  std::string name_;
  DecodeFn fn_;
};

}  // namespace

DecoderPtr make_tikhonov_decoder(ModelPtr model, double lambda, double tol, int max_iter) {
  return std::make_shared<TikhonovDecoder>(std::move(model), lambda, tol, max_iter);
}

DecoderPtr make_nearest_feasible_decoder(std::shared_ptr<const PairedDataset> dataset, NoiseBall noise) {
  return std::make_shared<DatasetDecoder>(DecoderKind::kNearestFeasible, std::move(dataset), std::move(noise));
}

DecoderPtr make_feasible_mean_decoder(std::shared_ptr<const PairedDataset> dataset, NoiseBall noise) {
  return std::make_shared<DatasetDecoder>(DecoderKind::kFeasibleMean, std::move(dataset), std::move(noise));
}

DecoderPtr make_constant_decoder(Tensor z0) { return std::make_shared<ConstantDecoder>(std::move(z0)); }

DecoderPtr make_function_decoder(std::string name, DecodeFn fn) {
  return std::make_shared<FunctionDecoder>(std::move(name), std::move(fn));
}

// --- External transports ------------------------------------------------------------

namespace {

struct ProcessOutput {
  int status = 0;
  std::string out;
  std::string err;
};

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

ProcessOutput run_process(const std::vector<std::string>& argv, const std::string& input,
                          std::chrono::milliseconds timeout) {
  static const bool sigpipe_ignored = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)sigpipe_ignored;

  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) || ::pipe2(out_pipe, O_CLOEXEC) || ::pipe2(err_pipe, O_CLOEXEC)) {
    throw DecoderError(std::string("cannot create pipes: ") + std::strerror(errno), true);
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw DecoderError(std::string("fork failed: ") + std::strerror(errno), true);
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int to_child = in_pipe[1];
  const int from_child = out_pipe[0];
  const int err_child = err_pipe[0];
  set_nonblocking(to_child);
  set_nonblocking(from_child);
  set_nonblocking(err_child);

  ProcessOutput res;
  std::size_t written = 0;
  if (input.empty()) {
    ::close(to_child);
    to_child = -1;
  }
  bool out_open = true, err_open = true;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::array<char, 65536> buf;
  while (out_open || err_open) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      if (to_child >= 0) ::close(to_child);
      ::close(from_child);
      ::close(err_child);
      throw DecoderError("external decoder timed out after " + std::to_string(timeout.count()) + " ms", true);
    }
    std::vector<pollfd> fds;
    if (to_child >= 0) fds.push_back({to_child, POLLOUT, 0});
    if (out_open) fds.push_back({from_child, POLLIN, 0});
    if (err_open) fds.push_back({err_child, POLLIN, 0});
    const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (rc < 0 && errno != EINTR) break;
    for (const pollfd& p : fds) {
      if (!p.revents) continue;
      if (p.fd == to_child) {
        const ssize_t n = ::write(to_child, input.data() + written, input.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if ((n < 0 && errno != EAGAIN) || written == input.size()) {
          ::close(to_child);
          to_child = -1;
        }
      } else {
        const ssize_t n = ::read(p.fd, buf.data(), buf.size());
        if (n > 0) {
          (p.fd == from_child ? res.out : res.err).append(buf.data(), static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EAGAIN) {
          (p.fd == from_child ? out_open : err_open) = false;
        }
      }
    }
  }
  if (to_child >= 0) ::close(to_child);
  ::close(from_child);
  ::close(err_child);
  int status = 0;
  ::waitpid(pid, &status, 0);
  res.status = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return res;
}

std::string tail(const std::string& s, std::size_t n = 400) { return s.size() <= n ? s : s.substr(s.size() - n); }

// Validates a decode response against the request.
std::vector<Tensor> checked_tensors(const std::string& who, const wire::Response& r, std::size_t count,
                                    const std::optional<Shape>& shape) {
  if (!r.ok) throw DecoderError(who + " reported an error: " + r.message);
  if (r.pong) throw DecoderError(who + " answered a decode request with a pong");
  if (r.tensors.size() != count) {
    throw DecoderError(who + " returned " + std::to_string(r.tensors.size()) + " reconstructions, expected " +
                       std::to_string(count));
  }
  if (shape) {
    for (const Tensor& t : r.tensors) {
      if (t.shape() != *shape) {
        throw DecoderError(who + " returned shape " + shape_to_string(t.shape()) + ", expected " +
                           shape_to_string(*shape));
      }
    }
  }
  return r.tensors;
}

class SubprocessDecoder final : public Decoder {
 public:
  SubprocessDecoder(std::vector<std::string> argv, ExternalOptions options)
      : argv_(std::move(argv)), options_(std::move(options)) {
    if (argv_.empty()) throw ContractError("subprocess decoder needs a command");
  }
  DecoderKind kind() const override { return DecoderKind::kExternalSubprocess; }
  std::string identity() const override {
    std::string s = "subprocess(";
    for (std::size_t i = 0; i < argv_.size(); ++i) s += (i ? " " : "") + argv_[i];
    return s + ")";
  }

  wire::Response exchange(const std::string& request) const {
    std::lock_guard<std::mutex> lock(mu_);
    ProcessOutput p = run_process(argv_, request, options_.timeout);
    if (p.status == 127) throw DecoderError(identity() + ": command could not be started", true);
    if (p.status != 0) {
      throw DecoderError(identity() + " exited with status " + std::to_string(p.status) + ": " + tail(p.err));
    }
    try {
      return wire::decode_response(p.out);
    } catch (const ParseError& e) {
      throw DecoderError(identity() + ": protocol violation: " + e.what());
    }
  }

 protected:
  std::vector<Tensor> decode_impl(const Tensor& y, std::size_t count, std::uint64_t seed) const override {
    wire::Request req;
    req.count = count;
    req.seed = seed;
    req.y = y;
    return checked_tensors(identity(), exchange(wire::encode_request(req)), count, options_.output_shape);
  }

 private:
  std::vector<std::string> argv_;
  ExternalOptions options_;
  mutable std::mutex mu_;
};

class HttpDecoder final : public Decoder {
 public:
  HttpDecoder(std::string base_url, ExternalOptions options) : url_(std::move(base_url)), options_(std::move(options)) {
    const auto scheme = url_.find("://");
    if (scheme == std::string::npos) throw ContractError("http decoder URL needs a scheme: " + url_);
    const auto slash = url_.find('/', scheme + 3);
    host_ = url_.substr(0, slash);
    prefix_ = slash == std::string::npos ? "" : url_.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
  DecoderKind kind() const override { return DecoderKind::kExternalHttp; }
  std::string identity() const override { return "http(" + url_ + ")"; }

  std::string ping() const {
    httplib::Client cli(host_);
    configure(cli);
    auto res = cli.Get(prefix_ + "/health");
    if (!res) return "unreachable: " + httplib::to_string(res.error());
    if (res->status != 200) return "health endpoint returned HTTP " + std::to_string(res->status);
    return "";
  }

 protected:
  std::vector<Tensor> decode_impl(const Tensor& y, std::size_t count, std::uint64_t seed) const override {
    wire::Request req;
    req.count = count;
    req.seed = seed;
    req.y = y;
    std::lock_guard<std::mutex> lock(mu_);
    httplib::Client cli(host_);
    configure(cli);
    auto res = cli.Post(prefix_ + "/decode", wire::encode_request(req), "application/octet-stream");
    if (!res) throw DecoderError(identity() + " unreachable: " + httplib::to_string(res.error()), true);
    if (res->status == 503) throw DecoderError(identity() + " unavailable: " + tail(res->body), true);
    if (res->status != 200) {
      throw DecoderError(identity() + " returned HTTP " + std::to_string(res->status) + ": " + tail(res->body));
    }
    try {
      return checked_tensors(identity(), wire::decode_response(res->body), count, options_.output_shape);
    } catch (const ParseError& e) {
      throw DecoderError(identity() + ": protocol violation: " + e.what());
    }
  }

 private:
  void configure(httplib::Client& cli) const {
    const auto ms = options_.timeout.count();
    cli.set_connection_timeout(ms / 1000, (ms % 1000) * 1000);
    cli.set_read_timeout(ms / 1000, (ms % 1000) * 1000);
    cli.set_write_timeout(ms / 1000, (ms % 1000) * 1000);
  }

  std::string url_;
  std::string host_;
  std::string prefix_;
  ExternalOptions options_;
  mutable std::mutex mu_;
};

std::mutex& key_mutex(const std::string& key) {
  static std::array<std::mutex, 64> stripes;
  return stripes[std::hash<std::string>{}(key) % stripes.size()];
}

class CachedDecoder final : public Decoder {
 public:
  CachedDecoder(DecoderPtr inner, std::filesystem::path dir, bool replay)
      : inner_(std::move(inner)), dir_(std::move(dir)), replay_(replay) {
    if (!inner_) throw ContractError("cached decoder needs an inner decoder");
    std::filesystem::create_directories(dir_);
  }
  DecoderKind kind() const override { return DecoderKind::kCached; }
  std::string identity() const override { return inner_->identity(); }

 protected:
  std::vector<Tensor> decode_impl(const Tensor& y, std::size_t count, std::uint64_t seed) const override {
    const std::string key = sha256_hex(inner_->identity() + "\n" + std::to_string(count) + "\n" +
                                       std::to_string(seed) + "\n" + htk::to_bytes(y));
    const auto path = dir_ / (key + ".bin");
    std::lock_guard<std::mutex> lock(key_mutex(key));
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      return wire::decode_response(bytes).tensors;
    }
    if (replay_) throw DecoderError("decoder cache miss in replay mode (key " + key + ")");
    FiniteSet out = inner_->decode(y, count, seed);
    const auto tmp = dir_ / (key + ".tmp");
    {
      std::ofstream f(tmp, std::ios::binary);
      f << wire::encode_response(out.elements());
      if (!f) throw Error("cannot write decoder cache entry " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return out.elements();
  }

 private:
  DecoderPtr inner_;
  std::filesystem::path dir_;
  bool replay_;
};

}  // namespace

DecoderPtr make_subprocess_decoder(std::vector<std::string> argv, ExternalOptions options) {
  return std::make_shared<SubprocessDecoder>(std::move(argv), std::move(options));
}

DecoderPtr make_http_decoder(std::string base_url, ExternalOptions options) {
  return std::make_shared<HttpDecoder>(std::move(base_url), std::move(options));
}

std::string health_check(const Decoder& decoder) {
  try {
    if (const auto* s = dynamic_cast<const SubprocessDecoder*>(&decoder)) {
      wire::Response r = s->exchange(wire::encode_ping());
      return r.ok && r.pong ? "" : "unexpected answer to ping";
    }
    if (const auto* h = dynamic_cast<const HttpDecoder*>(&decoder)) return h->ping();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

DecoderPtr make_cached_decoder(DecoderPtr inner, std::filesystem::path cache_dir, bool replay) {
  return std::make_shared<CachedDecoder>(std::move(inner), std::move(cache_dir), replay);
}

DecoderPtr with_env_cache(DecoderPtr inner) {
  const char* dir = std::getenv("HALLUC_CACHE_DIR");
  if (!dir || !*dir) return inner;
  const char* replay = std::getenv("HALLUC_CACHE_REPLAY");
  return make_cached_decoder(std::move(inner), dir, replay && std::string(replay) == "1");
}

}  // namespace halluc
