#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relcat/autograd.hpp"
#include "relcat/errors.hpp"

namespace relcat {

class WeightFileError : public Error {
 public:
  enum class Kind { io, magic, truncated, shape };
  WeightFileError(Kind kind, std::string tensor, const std::string& what)
      : Error(what), kind_(kind), tensor_(std::move(tensor)) {}
  Kind kind() const { return kind_; }
  // Offending tensor name for shape errors, empty otherwise.
  const std::string& tensor() const { return tensor_; }

 private:
  Kind kind_;
  std::string tensor_;
};

struct NamedTensor {
  std::string name;
  Matrix value;
};

// "RELCAT01", u32 count, then per tensor: u16 name length, name, u8 rank,
// rank x u32 dims, float32 data. All little-endian. Matrices are written with
// rank 2.
void save_weights(std::span<const ag::Parameter* const> params, const std::filesystem::path& path);
std::vector<NamedTensor> read_weights(const std::filesystem::path& path);

// Fills `params` in order. The file must hold exactly these tensors with the
// same names and shapes; the first mismatch is reported as a shape error.
void load_weights(std::span<ag::Parameter* const> params, const std::filesystem::path& path);

}  // namespace relcat
