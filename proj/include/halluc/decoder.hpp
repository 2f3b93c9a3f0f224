#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "halluc/cgls.hpp"
#include "halluc/feasible.hpp"
#include "halluc/forward_model.hpp"
#include "halluc/seminorm.hpp"

namespace halluc {

enum class DecoderKind {
  kTikhonov,
  kNearestFeasible,
  kFeasibleMean,
  kConstant,
  kFunction,
  kExternalSubprocess,
  kExternalHttp,
  kCached,
};

std::string decoder_kind_name(DecoderKind kind);

/// Set-valued decoder phi: Y => X.
///
/// decode() returns exactly `count` reconstructions; deterministic decoders
/// repeat one element. Results are a function of (decoder, y, count, seed).
class Decoder {
 public:
  virtual ~Decoder() = default;

  virtual DecoderKind kind() const = 0;
  /// Stable description, used as part of cache keys.
  virtual std::string identity() const = 0;

  FiniteSet decode(const Tensor& y, std::size_t count, std::uint64_t seed) const;

 protected:
  virtual std::vector<Tensor> decode_impl(const Tensor& y, std::size_t count, std::uint64_t seed) const = 0;
};

using DecoderPtr = std::shared_ptr<const Decoder>;

/// Shared decoder plus per-use settings.
struct DecoderHandle {
  DecoderPtr decoder;
  std::size_t sample_count = 1;

  FiniteSet decode(const Tensor& y, std::uint64_t seed) const;
  FiniteSet decode(const Tensor& y, std::size_t count, std::uint64_t seed) const;
};

FiniteSet decode(const DecoderHandle& h, const Tensor& y, std::size_t count, std::uint64_t seed);

// --- Built-in decoders -------------------------------------------------------------

struct TikhonovResult {
  Tensor solution;
  /// ||f z - y||_2.
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// argmin_z ||f z - y||^2 + lambda ||z||^2 by damped CGLS.
TikhonovResult tikhonov_reconstruct(const LinearForwardModel& model, const Tensor& y, double lambda,
                                    double tol = 1e-12, int max_iter = 2000);

DecoderPtr make_tikhonov_decoder(ModelPtr model, double lambda, double tol = 1e-12, int max_iter = 2000);

/// Among dataset samples with f x_n in y + E, the one with the smallest
/// measurement residual (lowest index on ties). With an empty feasible set
/// the nearest sample overall is returned.
DecoderPtr make_nearest_feasible_decoder(std::shared_ptr<const PairedDataset> dataset, NoiseBall noise);

/// Mean of the feasible samples; same fallback as nearest_feasible.
DecoderPtr make_feasible_mean_decoder(std::shared_ptr<const PairedDataset> dataset, NoiseBall noise);

DecoderPtr make_constant_decoder(Tensor z0);

/// Wraps a callback returning the full reconstruction set for (y, count,
/// seed); the set is cycled or truncated to `count`.
using DecodeFn = std::function<std::vector<Tensor>(const Tensor& y, std::size_t count, std::uint64_t seed)>;
DecoderPtr make_function_decoder(std::string name, DecodeFn fn);

// --- External decoders -------------------------------------------------------------

struct ExternalOptions {
  std::chrono::milliseconds timeout{60000};
  /// Expected reconstruction shape; checked on every response when set.
  std::optional<Shape> output_shape;
};

/// Spawns `argv` once per request and talks the wire protocol over its
/// standard input and output.
DecoderPtr make_subprocess_decoder(std::vector<std::string> argv, ExternalOptions options = {});

/// POSTs framed requests to <base_url>/decode; pings GET <base_url>/health.
DecoderPtr make_http_decoder(std::string base_url, ExternalOptions options = {});

/// Sends a ping; returns an empty string when healthy, else the failure text.
std::string health_check(const Decoder& decoder);

/// Content-addressed result cache keyed by SHA-256 of (identity, y, count,
/// seed). In replay mode a cache miss raises DecoderError.
DecoderPtr make_cached_decoder(DecoderPtr inner, std::filesystem::path cache_dir, bool replay = false);

/// Wraps `inner` in a cache when HALLUC_CACHE_DIR is set; replay mode when
/// HALLUC_CACHE_REPLAY is set to 1.
DecoderPtr with_env_cache(DecoderPtr inner);

}  // namespace halluc
