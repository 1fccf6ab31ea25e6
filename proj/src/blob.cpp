#include "dualsrc/blob.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dualsrc/errors.hpp"

namespace dualsrc {

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

void write_blob(const std::filesystem::path& path, const char magic[4],
                const nlohmann::json& header, std::span<const double> data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  const auto count = static_cast<std::uint64_t>(data.size());
  os.write(magic, 4);
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(reinterpret_cast<const char*>(&count), sizeof(count));
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Blob read_blob(const std::filesystem::path& path, const char magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) {
      throw ParseError(std::string("truncated ") + what, pos);
    }
  };
  need(4, "magic");
  if (std::memcmp(bytes.data(), magic, 4) != 0) {
    throw ParseError("bad magic in " + path.string(), 0);
  }
  pos = 4;
  std::uint32_t len = 0;
  need(sizeof(len), "header length");
  std::memcpy(&len, bytes.data() + pos, sizeof(len));
  pos += sizeof(len);
  need(len, "header");
  Blob blob;
  try {
    blob.header = nlohmann::json::parse(bytes.substr(pos, len));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad header json: ") + e.what(),
                     pos + e.byte);
  }
  pos += len;
  std::uint64_t count = 0;
  need(sizeof(count), "payload length");
  std::memcpy(&count, bytes.data() + pos, sizeof(count));
  pos += sizeof(count);
  if (count > (bytes.size() - pos) / sizeof(double)) {
    throw ParseError("truncated payload", pos);
  }
  need(count * sizeof(double), "payload");
  blob.data.resize(count);
  std::memcpy(blob.data.data(), bytes.data() + pos, count * sizeof(double));
  pos += count * sizeof(double);
  if (pos != bytes.size()) throw ParseError("trailing bytes", pos);
  return blob;
}

}  // namespace dualsrc
