#pragma once

// On-disk formats: the StackFile (JSON manifest + raw little-endian f32
// payload, CRC32-checked), P5 PGM heatmaps and RFC-4180 CSV with 9
// significant digits.

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xagg/core.hpp"

namespace xagg {

namespace detail {

// CRC-32 (IEEE, reflected, poly 0xEDB88320).
inline std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::string crc32_hex(const std::vector<unsigned char>& data) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc32(data.data(), data.size()));
  return buf;
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::filesystem::path& path, const void* data, std::size_t len) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline std::vector<unsigned char> f32le_payload(const AttributionStack& stack) {
  std::vector<unsigned char> payload(stack.k() * stack.d() * 4);
  std::size_t off = 0;
  for (std::size_t i = 0; i < stack.k(); ++i)
    for (double v : stack.column(i).values) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      payload[off++] = static_cast<unsigned char>(bits & 0xFF);
      payload[off++] = static_cast<unsigned char>((bits >> 8) & 0xFF);
      payload[off++] = static_cast<unsigned char>((bits >> 16) & 0xFF);
      payload[off++] = static_cast<unsigned char>((bits >> 24) & 0xFF);
    }
  return payload;
}

}  // namespace detail

// StackFile: a directory holding manifest.json plus the f32 payload it names,
// k*d little-endian floats, method-major.
inline void save_stack(const AttributionStack& stack, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<unsigned char> payload = detail::f32le_payload(stack);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["dtype"] = "f32le";
  manifest["d"] = stack.d();
  manifest["shape"] = {stack.shape().height, stack.shape().width, stack.shape().channels};
  manifest["k"] = stack.k();
  manifest["methods"] = stack.method_names();
  manifest["payload"] = "data.f32";
  manifest["crc32"] = detail::crc32_hex(payload);
  const std::string text = manifest.dump(2) + "\n";
  detail::write_file(dir / "manifest.json", text.data(), text.size());
  detail::write_file(dir / "data.f32", payload.data(), payload.size());
}

inline AttributionStack load_stack(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto manifest_bytes = detail::read_file(manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest is not valid JSON: " + std::string(e.what()), e.byte);
  }
  try {
    if (manifest.at("version").get<int>() != 1) throw FormatError("unsupported version", 0);
    if (manifest.at("dtype").get<std::string>() != "f32le")
      throw FormatError("unsupported dtype", 0);
    const auto shape_arr = manifest.at("shape");
    if (!shape_arr.is_array() || shape_arr.size() != 3) throw FormatError("bad shape", 0);
    const Shape shape(shape_arr[0].get<std::size_t>(), shape_arr[1].get<std::size_t>(),
                      shape_arr[2].get<std::size_t>());
    const auto d = manifest.at("d").get<std::size_t>();
    if (d != shape.d()) throw FormatError("d does not match shape", 0);
    const auto k = manifest.at("k").get<std::size_t>();
    const auto methods = manifest.at("methods").get<std::vector<std::string>>();
    if (k < 1 || methods.size() != k) throw FormatError("method list does not match k", 0);

    const auto payload_name = manifest.at("payload").get<std::string>();
    const auto payload = detail::read_file(dir / payload_name);
    const std::size_t expected = k * d * 4;
    if (payload.size() != expected)
      throw FormatError("payload size mismatch", std::min(payload.size(), expected));
    const std::string crc = detail::crc32_hex(payload);
    if (crc != manifest.at("crc32").get<std::string>())
      throw FormatError("payload crc32 mismatch", 0);

    std::vector<AttributionMap> cols;
    cols.reserve(k);
    std::size_t off = 0;
    for (std::size_t i = 0; i < k; ++i) {
      AttributionMap map{shape, std::vector<double>(d), true};
      for (std::size_t j = 0; j < d; ++j) {
        std::uint32_t bits = static_cast<std::uint32_t>(payload[off]) |
                             (static_cast<std::uint32_t>(payload[off + 1]) << 8) |
                             (static_cast<std::uint32_t>(payload[off + 2]) << 16) |
                             (static_cast<std::uint32_t>(payload[off + 3]) << 24);
        off += 4;
        float f;
        std::memcpy(&f, &bits, 4);
        map.values[j] = static_cast<double>(f);
      }
      cols.push_back(std::move(map));
    }
    return AttributionStack(shape, methods, std::move(cols));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest field error: " + std::string(e.what()), 0);
  }
}

// P5 PGM, maxval 255, byte = round(255 * clamp(v, 0, 1)), row-major. Maps
// with several channels are reduced to the per-pixel channel mean.
inline void export_heatmap(const AttributionMap& map, const std::filesystem::path& path) {
  const Shape& s = map.shape;
  std::string header = "P5\n" + std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
  std::vector<unsigned char> bytes(s.pixels());
  for (std::size_t p = 0; p < s.pixels(); ++p) {
    double v = 0.0;
    for (std::size_t c = 0; c < s.channels; ++c) v += map.values[p * s.channels + c];
    v /= static_cast<double>(s.channels);
    v = std::min(std::max(v, 0.0), 1.0);
    bytes[p] = static_cast<unsigned char>(std::lround(255.0 * v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

// RFC-4180 CSV: CRLF line endings, quoting only where needed, numbers at 9
// significant digits with '.' decimal separator.
class CsvWriter {
 public:
  static std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
  }

  void cell(const std::string& text) {
    if (!row_.empty()) row_.push_back(',');
    if (text.find_first_of(",\"\r\n") != std::string::npos) {
      row_.push_back('"');
      for (char c : text) {
        if (c == '"') row_.push_back('"');
        row_.push_back(c);
      }
      row_.push_back('"');
    } else {
      row_ += text;
    }
  }

  void cell(double v) { cell(format_number(v)); }
  void cell_missing() { cell(std::string()); }

  void end_row() {
    data_ += row_;
    data_ += "\r\n";
    row_.clear();
  }

  const std::string& str() const { return data_; }

  void write(const std::filesystem::path& path) const {
    detail::write_file(path, data_.data(), data_.size());
  }

 private:
  std::string row_;
  std::string data_;
};

}  // namespace xagg
