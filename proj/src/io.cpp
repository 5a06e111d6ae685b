#include "camloc/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "array payloads are little-endian float64; big-endian hosts need byte swaps");

namespace camloc {

namespace {

void write_array_block(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_array_block(std::istream& is, std::vector<int> shape) {
  Tensor t(std::move(shape));
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated array payload");
  return t;
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return is;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  auto os = open_out(path, true);
  os << "camloc-checkpoint v1\n";
  os << "seed " << ckpt.seed << "\n";
  os << "epoch " << ckpt.epoch << "\n";
  os << "config " << ckpt.config_json << "\n";
  for (const auto& [name, tensor] : ckpt.arrays) {
    os << "array " << name;
    for (int d : tensor.shape()) os << " " << d;
    os << "\n";
  }
  os << "end\n";
  for (const auto& [name, tensor] : ckpt.arrays) write_array_block(os, tensor);
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto is = open_in(path, true);
  std::string line;
  if (!std::getline(is, line) || line != "camloc-checkpoint v1")
    throw std::runtime_error("not a camloc checkpoint: " + path);

  Checkpoint ckpt;
  std::vector<std::pair<std::string, std::vector<int>>> pending;
  while (std::getline(is, line)) {
    if (line == "end") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "seed") {
      ls >> ckpt.seed;
    } else if (key == "epoch") {
      ls >> ckpt.epoch;
    } else if (key == "config") {
      const auto pos = line.find(' ');
      ckpt.config_json = pos == std::string::npos ? "" : line.substr(pos + 1);
    } else if (key == "array") {
      std::string name;
      ls >> name;
      std::vector<int> shape;
      int d;
      while (ls >> d) shape.push_back(d);
      if (name.empty() || shape.empty())
        throw std::runtime_error("checkpoint: malformed array line: " + line);
      pending.emplace_back(name, shape);
    } else {
      throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
    }
  }
  for (auto& [name, shape] : pending)
    ckpt.arrays.emplace_back(name, read_array_block(is, shape));
  return ckpt;
}

void save_tensor(const Tensor& t, const std::string& path) {
  auto os = open_out(path, true);
  os << "camloc-tensor v1\nshape";
  for (int d : t.shape()) os << " " << d;
  os << "\nend\n";
  write_array_block(os, t);
  if (!os) throw std::runtime_error("failed writing tensor: " + path);
}

Tensor load_tensor(const std::string& path) {
  auto is = open_in(path, true);
  std::string line;
  if (!std::getline(is, line) || line != "camloc-tensor v1")
    throw std::runtime_error("not a camloc tensor file: " + path);
  if (!std::getline(is, line) || line.rfind("shape", 0) != 0)
    throw std::runtime_error("tensor file: missing shape line in " + path);
  std::istringstream ls(line.substr(5));
  std::vector<int> shape;
  int d;
  while (ls >> d) shape.push_back(d);
  if (!std::getline(is, line) || line != "end")
    throw std::runtime_error("tensor file: missing end marker in " + path);
  return read_array_block(is, shape);
}

void write_pgm(const std::vector<std::uint8_t>& gray, int h, int w, const std::string& path) {
  if (gray.size() != static_cast<std::size_t>(h) * w)
    throw std::invalid_argument("write_pgm: buffer size does not match extent");
  auto os = open_out(path, true);
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!os) throw std::runtime_error("failed writing " + path);
}

void write_ppm(const std::vector<std::uint8_t>& rgb, int h, int w, const std::string& path) {
  if (rgb.size() != static_cast<std::size_t>(h) * w * 3)
    throw std::invalid_argument("write_ppm: buffer size does not match extent");
  auto os = open_out(path, true);
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw std::runtime_error("failed writing " + path);
}

std::vector<std::uint8_t> read_pgm(const std::string& path, int* h, int* w) {
  auto is = open_in(path, true);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw std::runtime_error("not a binary PGM: " + path);
  int width, height, maxval;
  is >> width >> height >> maxval;
  is.get();  // single whitespace after maxval
  if (maxval != 255) throw std::runtime_error("unsupported PGM maxval in " + path);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!is) throw std::runtime_error("truncated PGM: " + path);
  *h = height;
  *w = width;
  return data;
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  auto is = open_in(path, true);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    const std::streamsize got = is.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

std::string hex_u64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

std::string read_text_file(const std::string& path) {
  auto is = open_in(path, true);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  auto os = open_out(path, true);
  os << content;
  if (!os) throw std::runtime_error("failed writing " + path);
}

}  // namespace camloc
