#include "tarot/parameters.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tarot/errors.hpp"

namespace tarot {

static_assert(std::endian::native == std::endian::little, "archive payload assumes a little-endian host");

Tensor& ParameterStore::add(const std::string& name, Shape shape, std::vector<double> values) {
  if (index_.contains(name)) throw std::logic_error("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back({name, Tensor::from(std::move(shape), std::move(values), true)});
  return params_.back().tensor;
}

Tensor& ParameterStore::add_truncated_normal(const std::string& name, Shape shape, double std, Rng& rng) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.truncated_normal(std);
  return add(name, std::move(shape), std::move(values));
}

Tensor& ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  std::vector<double> values(shape_numel(shape), value);
  return add(name, std::move(shape), std::move(values));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].tensor;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].tensor;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

const NamedArray* Archive::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void save_archive(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::json header;
  header["metadata"] = archive.metadata;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : archive.arrays) {
    if (shape_numel(a.shape) != a.values.size()) {
      throw ShapeError("archive entry " + a.name + " has " + std::to_string(a.values.size()) +
                       " values for shape " + shape_string(a.shape));
    }
    header["tensors"].push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.values.size();
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : archive.arrays) {
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ULL << 32)) throw std::runtime_error("corrupt archive header in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated archive header in " + path.string());
  const auto header = nlohmann::json::parse(text);
  Archive archive;
  archive.metadata = header.at("metadata");
  for (const auto& entry : header.at("tensors")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<Shape>();
    a.values.resize(shape_numel(a.shape));
    in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated archive payload for " + a.name);
    archive.arrays.push_back(std::move(a));
  }
  return archive;
}

}  // namespace tarot
