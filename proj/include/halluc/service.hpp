#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "halluc/decoder.hpp"
#include "halluc/feasible.hpp"
#include "halluc/io.hpp"

namespace halluc {

inline constexpr const char* kServiceVersion = "0.1.0";

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Threads draining the job queue.
  unsigned workers = 2;
  /// Tensor store mirror on disk; memory only when empty.
  std::filesystem::path store_dir;
  std::string cors_origin = "*";
};

/// HTTP API over registered models, datasets and decoders. Every route is
/// served under both /api and /api/v1.
///
/// Tensors live in an append-only store keyed by the SHA-256 of their HTK1
/// bytes. Errors map to 404 (unknown id), 422 (shape, contract or parse
/// failure) and 503 (external decoder unavailable).
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void register_model(const std::string& id, io::ModelDescriptor model);
  void register_dataset(const std::string& id, PairedDataset dataset, const std::string& model_id = "");
  void register_dataset_file(const std::string& id, const std::filesystem::path& manifest,
                             const std::string& model_id = "");
  void register_decoder(const std::string& id, DecoderHandle decoder);

  /// Content id of `t`; storing the same bytes twice yields the same id.
  std::string put_tensor(const Tensor& t);
  Tensor get_tensor(const std::string& id) const;

  /// Blocks serving options.host:options.port until stop().
  void listen();
  /// Binds an ephemeral port and serves on a background thread.
  int start_background();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace halluc
