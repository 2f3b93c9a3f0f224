#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "halluc/tensor.hpp"

namespace halluc::wire {

// External decoder framing, shared by the subprocess and HTTP transports.
//
// Request:  one JSON line {"protocol":"halluc-decoder/1","op":"decode",
//           "count":n,"seed":s,"shape":[...],"field":"real"|"complex"}
//           followed by one HTK1 tensor (the measurement y).
//           {"protocol":...,"op":"ping"} carries no payload.
// Response: one JSON line {"status":"ok","count":n} followed by n HTK1
//           tensors, or {"status":"ok","op":"pong"} for a ping, or
//           {"status":"error","message":"..."} with no payload.

inline constexpr const char* kProtocol = "halluc-decoder/1";

struct Request {
  std::string op = "decode";
  std::size_t count = 1;
  std::uint64_t seed = 0;
  Tensor y;
};

struct Response {
  bool ok = true;
  bool pong = false;
  std::string message;
  std::vector<Tensor> tensors;
};

std::string encode_request(const Request& req);
std::string encode_ping();
Request read_request(std::istream& in);

std::string encode_response(const std::vector<Tensor>& tensors);
std::string encode_pong();
std::string encode_error(const std::string& message);
/// Throws ParseError on malformed framing or trailing bytes.
Response decode_response(const std::string& bytes);

}  // namespace halluc::wire
