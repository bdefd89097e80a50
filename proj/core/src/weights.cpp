#include "relcat/weights.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <spdlog/spdlog.h>

namespace relcat {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'C', 'A', 'T', '0', '1'};

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw WeightFileError(WeightFileError::Kind::truncated, "",
                            fmt::format("weight file truncated at byte {}", bytes_.size()));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(std::span<const ag::Parameter* const> params, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const ag::Parameter* p : params) {
    if (p->name.size() > std::numeric_limits<std::uint16_t>::max())
      throw WeightFileError(WeightFileError::Kind::shape, p->name, "tensor name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    out += p->name;
    put<std::uint8_t>(out, 2);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    for (double v : p->value.values()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WeightFileError(WeightFileError::Kind::io, "", fmt::format("cannot write {}", path.string()));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw WeightFileError(WeightFileError::Kind::io, "", fmt::format("write failed: {}", path.string()));
}

std::vector<NamedTensor> read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WeightFileError(WeightFileError::Kind::io, "", fmt::format("cannot open {}", path.string()));
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic)) {
    if (std::memcmp(bytes.data(), kMagic, bytes.size()) == 0)
      throw WeightFileError(WeightFileError::Kind::truncated, "", "weight file truncated inside the header");
    throw WeightFileError(WeightFileError::Kind::magic, "", "not a RELCAT01 weight file");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw WeightFileError(WeightFileError::Kind::magic, "", "not a RELCAT01 weight file");

  Reader r(bytes);
  r.get_string(sizeof(kMagic));
  const std::uint32_t count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor tensor;
    tensor.name = r.get_string(r.get<std::uint16_t>());
    const std::uint8_t rank = r.get<std::uint8_t>();
    if (rank > 2)
      throw WeightFileError(WeightFileError::Kind::shape, tensor.name,
                            fmt::format("tensor {} has rank {}, expected at most 2", tensor.name, rank));
    std::uint32_t dims[2] = {1, 1};
    for (std::uint8_t d = 0; d < rank; ++d) dims[2 - rank + d] = r.get<std::uint32_t>();
    tensor.value = Matrix(dims[0], dims[1]);
    for (double& v : tensor.value.values()) v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
    out.push_back(std::move(tensor));
  }
  if (!r.at_end()) spdlog::warn("{}: trailing bytes after {} tensors", path.string(), count);
  return out;
}

void load_weights(std::span<ag::Parameter* const> params, const std::filesystem::path& path) {
  std::vector<NamedTensor> tensors = read_weights(path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ag::Parameter& p = *params[i];
    if (i >= tensors.size())
      throw WeightFileError(WeightFileError::Kind::shape, p.name,
                            fmt::format("tensor {} missing from weight file ({} tensors)", p.name, tensors.size()));
    const NamedTensor& t = tensors[i];
    if (t.name != p.name)
      throw WeightFileError(WeightFileError::Kind::shape, p.name,
                            fmt::format("tensor {}: file has {} in its place", p.name, t.name));
    if (!t.value.same_shape(p.value))
      throw WeightFileError(WeightFileError::Kind::shape, p.name,
                            fmt::format("tensor {}: expected {}x{}, file has {}x{}", p.name, p.value.rows(),
                                        p.value.cols(), t.value.rows(), t.value.cols()));
  }
  if (tensors.size() > params.size())
    throw WeightFileError(WeightFileError::Kind::shape, tensors[params.size()].name,
                          fmt::format("unexpected tensor {} in weight file", tensors[params.size()].name));
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(tensors[i].value);
}

}  // namespace relcat
