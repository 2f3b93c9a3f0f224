#include "halluc/wire.hpp"

#include <istream>
#include <sstream>

#include <json.hpp>

#include "halluc/errors.hpp"
#include "halluc/htk.hpp"

namespace halluc::wire {

using nlohmann::json;

namespace {

json parse_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("decoder message: missing JSON header line");
  try {
    json h = json::parse(line);
    if (!h.is_object()) throw ParseError("decoder message: header is not a JSON object");
    return h;
  } catch (const json::exception& e) {
    throw ParseError(std::string("decoder message: bad JSON header: ") + e.what());
  }
}

}  // namespace

std::string encode_request(const Request& req) {
  json h = {{"protocol", kProtocol},
            {"op", "decode"},
            {"count", req.count},
            {"seed", req.seed},
            {"shape", req.y.shape()},
            {"field", field_name(req.y.field())}};
  return h.dump() + "\n" + htk::to_bytes(req.y);
}

std::string encode_ping() { return json{{"protocol", kProtocol}, {"op", "ping"}}.dump() + "\n"; }

Request read_request(std::istream& in) {
  json h = parse_header(in);
  Request req;
  try {
    if (h.value("protocol", std::string()) != kProtocol) throw ParseError("decoder request: unknown protocol");
    req.op = h.at("op").get<std::string>();
    if (req.op == "ping") return req;
    if (req.op != "decode") throw ParseError("decoder request: unknown op '" + req.op + "'");
    req.count = h.at("count").get<std::size_t>();
    req.seed = h.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("decoder request: ") + e.what());
  }
  req.y = htk::read(in);
  if (req.y.shape() != h.at("shape").get<Shape>()) throw ParseError("decoder request: header shape mismatch");
  return req;
}

std::string encode_response(const std::vector<Tensor>& tensors) {
  std::string out = json{{"status", "ok"}, {"count", tensors.size()}}.dump() + "\n";
  for (const Tensor& t : tensors) out += htk::to_bytes(t);
  return out;
}

std::string encode_pong() { return json{{"status", "ok"}, {"op", "pong"}}.dump() + "\n"; }

std::string encode_error(const std::string& message) {
  return json{{"status", "error"}, {"message", message}}.dump() + "\n";
}

Response decode_response(const std::string& bytes) {
  std::istringstream in(bytes);
  json h = parse_header(in);
  Response r;
  try {
    const std::string status = h.at("status").get<std::string>();
    if (status == "error") {
      r.ok = false;
      r.message = h.value("message", std::string("unspecified decoder error"));
      return r;
    }
    if (status != "ok") throw ParseError("decoder response: unknown status '" + status + "'");
    if (h.value("op", std::string()) == "pong") {
      r.pong = true;
      return r;
    }
    const std::size_t count = h.at("count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i) r.tensors.push_back(htk::read(in));
  } catch (const json::exception& e) {
    throw ParseError(std::string("decoder response: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("decoder response: trailing bytes");
  return r;
}

}  // namespace halluc::wire
