#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tarot/random.hpp"
#include "tarot/tensor.hpp"

namespace tarot {

struct Parameter {
  std::string name;
  Tensor tensor;  // leaf, requires_grad = true
};

// Ordered, name-unique collection of trainable leaves.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values);
  Tensor& add_truncated_normal(const std::string& name, Shape shape, double std, Rng& rng);
  Tensor& add_constant(const std::string& name, Shape shape, double value);

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Archive {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

// Named-tensor archive: 8-byte little-endian header length, a JSON header
// {"metadata", "tensors": [{name, shape, offset}]}, then the contiguous
// little-endian float64 payload.
void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);

}  // namespace tarot
