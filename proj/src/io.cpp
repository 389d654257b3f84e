#include "dgf/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "dgf/error.hpp"

namespace dgf {
namespace {

constexpr char kMagic[4] = {'D', 'G', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("tensor file truncated");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const std::vector<NamedTensor>& tensors) {
  if (tensors.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidArgument("too many tensors for one container");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    if (nt.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InvalidArgument("tensor name too long: " + nt.name.substr(0, 32));
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(nt.name.size()));
    out.insert(out.end(), nt.name.begin(), nt.name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.height()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.width()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(nt.tensor.channels()));
    for (double v : nt.tensor.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_le<std::uint64_t>(out, bits);
    }
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("not a DGFT tensor file (bad magic)");
  const auto version = r.le<std::uint8_t>();
  if (version != kVersion) throw IoError("unsupported DGFT version " + std::to_string(version));
  const auto count = r.le<std::uint16_t>();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint16_t k = 0; k < count; ++k) {
    const auto name_len = r.le<std::uint16_t>();
    std::string name = r.str(name_len);
    const auto h = r.le<std::uint32_t>();
    const auto w = r.le<std::uint32_t>();
    const auto c = r.le<std::uint32_t>();
    constexpr std::uint32_t kMaxDim = std::numeric_limits<int>::max();
    if (h == 0 || w == 0 || c == 0 || h > kMaxDim || w > kMaxDim || c > kMaxDim) {
      throw IoError("invalid dimensions for tensor '" + name + "'");
    }
    const Shape shape{static_cast<int>(h), static_cast<int>(w), static_cast<int>(c)};
    if (shape.size() > bytes.size() / 8) throw IoError("tensor file truncated");
    std::vector<double> data(shape.size());
    for (double& v : data) {
      const auto bits = r.le<std::uint64_t>();
      std::memcpy(&v, &bits, sizeof v);
      if (!std::isfinite(v)) throw IoError("non-finite value in tensor '" + name + "'");
    }
    tensors.push_back(NamedTensor{std::move(name), Tensor(shape, std::move(data))});
  }
  if (!r.done()) throw IoError("trailing bytes after last tensor");
  return tensors;
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file(path, encode_tensors(tensors));
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  return decode_tensors(read_file(path));
}

bool is_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char head[4] = {};
  in.read(head, 4);
  return in.gcount() == 4 && std::equal(head, head + 4, kMagic);
}

namespace {

class NetpbmParser {
 public:
  explicit NetpbmParser(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  int header_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw IoError("malformed netpbm header");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > std::numeric_limits<int>::max()) throw IoError("netpbm header value too large");
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw IoError("malformed netpbm header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw IoError(path.string() + ": not a binary PGM/PPM (P5/P6) image");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  NetpbmParser p(bytes);
  const int w = p.header_int();
  const int h = p.header_int();
  const int maxval = p.header_int();
  if (w < 1 || h < 1) throw IoError(path.string() + ": invalid image dimensions");
  if (maxval != 255) throw IoError(path.string() + ": only maxval 255 is supported");
  const std::size_t start = p.raster_start();
  const Shape shape{h, w, channels};
  if (bytes.size() - start < shape.size()) throw IoError(path.string() + ": truncated raster");
  std::vector<double> data(shape.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bytes[start + i] / 255.0;
  return Tensor(shape, std::move(data));
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw InvalidArgument("save_image: need 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  const std::string header = std::string(image.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width()) + " " + std::to_string(image.height()) +
                             "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + image.size());
  for (double v : image.data()) {
    bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  write_file(path, bytes);
}

std::vector<NamedTensor> model_tensors(DgfModel& model) {
  std::vector<NamedTensor> out;
  for (const ParamRef& p : model.parameters()) {
    out.push_back(NamedTensor{p.name, Tensor(1, 1, static_cast<int>(p.values.size()),
                                             std::vector<double>(p.values.begin(), p.values.end()))});
  }
  return out;
}

void load_model_tensors(DgfModel& model, const std::vector<NamedTensor>& tensors) {
  for (const ParamRef& p : model.parameters()) {
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const NamedTensor& nt) { return nt.name == p.name; });
    if (it == tensors.end()) throw IoError("checkpoint is missing parameter " + p.name);
    if (it->tensor.size() != p.values.size()) {
      throw IoError("checkpoint parameter " + p.name + " has " + std::to_string(it->tensor.size()) +
                    " values, model expects " + std::to_string(p.values.size()));
    }
    std::copy(it->tensor.data().begin(), it->tensor.data().end(), p.values.begin());
  }
}

Tensor load_tensor_or_image(const std::filesystem::path& path) {
  if (is_tensor_file(path)) {
    auto tensors = load_tensors(path);
    if (tensors.empty()) throw IoError(path.string() + ": tensor container is empty");
    return std::move(tensors.front().tensor);
  }
  return load_image(path);
}

}  // namespace dgf
