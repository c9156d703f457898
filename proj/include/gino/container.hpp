#pragma once

// Binary tensor container, little-endian:
//   "GINOCKPT" | u64 header length | JSON header | raw payloads
// The header holds {"version", "meta", "tensors": [{name, dtype, shape, offset, nbytes}]},
// offsets relative to the start of the payload block.

#include "gino/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gino::io {

inline constexpr const char* kContainerVersion = "gino-ckpt-v1";

enum class DType { f32, f64 };

struct Record {
  DType dtype = DType::f64;
  Shape shape;
  std::vector<unsigned char> bytes;

  template <typename Scalar>
  Tensor<Scalar> as() const;
};

class Archive {
 public:
  nlohmann::json meta = nlohmann::json::object();

  template <typename Scalar>
  void put(const std::string& name, const Tensor<Scalar>& t);
  void put_vector(const std::string& name, const Eigen::VectorXd& v);

  bool contains(const std::string& name) const { return records_.count(name) != 0; }
  const Record& at(const std::string& name) const;
  template <typename Scalar>
  Tensor<Scalar> get(const std::string& name) const { return at(name).as<Scalar>(); }
  Eigen::VectorXd get_vector(const std::string& name) const;

  /// Names in stored (sorted) order.
  std::vector<std::string> names() const;
  const std::map<std::string, Record>& records() const { return records_; }

  std::vector<unsigned char> serialize() const;
  static Archive deserialize(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  std::map<std::string, Record> records_;
};

std::string dtype_name(DType d);

}  // namespace gino::io
