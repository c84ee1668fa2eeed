#include "sbp/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbp/errors.hpp"

namespace sbp {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'B', 'P', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& s, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Network<float>& net) {
  Network<float> copy(net);
  json arrays = json::array();
  std::string payload;
  for (const auto& p : copy.params()) {
    const std::size_t bytes = p.value->size() * 4;
    arrays.push_back({{"name", p.name},
                      {"offset", payload.size()},
                      {"length", bytes},
                      {"shape", p.value->shape()}});
    for (float v : p.value->values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(payload, bits);
    }
  }
  const json header = {{"format_version", kCheckpointVersion},
                       {"network", copy.spec()},
                       {"arrays", arrays}};
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  return out + text + payload;
}

Network<float> deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const std::size_t hlen = get_u32(bytes, 4);
  if (bytes.size() < 8 + hlen) {
    throw FormatError("checkpoint header truncated: need " + std::to_string(8 + hlen) +
                      " bytes, file has " + std::to_string(bytes.size()));
  }
  json header;
  try {
    header = json::parse(bytes.substr(8, hlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                        " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t base = 8 + hlen;
    const std::size_t payload = bytes.size() - base;
    const auto& arrays = header.at("arrays");

    // Manifest ranges must tile the payload exactly, in order.
    std::size_t expect = 0;
    for (const auto& a : arrays) {
      const auto off = a.at("offset").get<std::size_t>();
      const auto len = a.at("length").get<std::size_t>();
      if (off != expect || len % 4 != 0 ||
          len != 4 * shape_size(a.at("shape").get<Shape>())) {
        throw FormatError("checkpoint manifest entry '" + a.at("name").get<std::string>() +
                          "' has an inconsistent byte range");
      }
      expect += len;
    }
    if (expect != payload) {
      throw FormatError("checkpoint payload is " + std::to_string(payload) +
                        " bytes, manifest describes " + std::to_string(expect));
    }

    Network<float> net = Network<float>::from_spec(header.at("network"));
    auto params = net.params();
    if (params.size() != arrays.size()) {
      throw FormatError("checkpoint has " + std::to_string(arrays.size()) +
                        " arrays, network needs " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& a = arrays[i];
      if (a.at("name").get<std::string>() != params[i].name ||
          a.at("shape").get<Shape>() != params[i].value->shape()) {
        throw FormatError("checkpoint array " + std::to_string(i) + " does not match " +
                          params[i].name);
      }
      std::size_t at = base + a.at("offset").get<std::size_t>();
      for (auto& v : params[i].value->values()) {
        const std::uint32_t bits = get_u32(bytes, at);
        std::memcpy(&v, &bits, 4);
        at += 4;
      }
    }
    return net;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint network spec rejected: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint network spec rejected: ") + e.what());
  }
}

void save_checkpoint(const Network<float>& net, const std::string& path) {
  const std::string bytes = serialize_checkpoint(net);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Network<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace sbp
