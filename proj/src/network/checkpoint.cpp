#include <fstream>
#include <sstream>

#include "mtur/error.hpp"
#include "mtur/network.hpp"

namespace mtur::net {

std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p.replace_extension(".json");
  return p;
}

template <typename T>
void save_checkpoint(const MTURModel<T>& model, const std::filesystem::path& path) {
  std::vector<MttbEntry> entries;
  entries.reserve(model.parameters().size());
  for (const auto& p : model.parameters()) entries.push_back(MttbEntry{p.name, p.var.value()});
  write_mttb(path, entries);

  const auto sidecar = config_sidecar(path);
  std::ofstream out(sidecar, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << nlohmann::json(model.config()).dump(2) << "\n";
  if (!out) throw IoError("write failed: " + sidecar.string());
}

template <typename T>
void assign_parameters(MTURModel<T>& model, const std::vector<MttbEntry>& entries) {
  std::vector<std::string> problems;
  std::unordered_map<std::string, const MttbEntry*> by_name;
  for (const auto& e : entries) {
    if (!by_name.emplace(e.name, &e).second) problems.push_back("duplicate entry '" + e.name + "'");
  }
  for (const auto& p : model.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      problems.push_back("missing '" + p.name + "'");
      continue;
    }
    const Shape& have = std::visit([](const auto& t) -> const Shape& { return t.shape(); }, it->second->tensor);
    if (have != p.var.shape()) {
      problems.push_back("'" + p.name + "' has shape " + shape_string(have) + ", expected " +
                         shape_string(p.var.shape()));
    }
    by_name.erase(it);
  }
  for (const auto& [name, e] : by_name) problems.push_back("unexpected '" + name + "'");
  if (!problems.empty()) {
    std::ostringstream os;
    os << "checkpoint does not match model:";
    for (const auto& p : problems) os << ' ' << p << ';';
    throw ConfigError(os.str());
  }
  for (auto& p : model.parameters()) {
    const auto& e = find_entry(entries, p.name);
    Tensor<T> value = std::visit([](const auto& t) { return t.template cast<T>(); }, e.tensor);
    if (!value.all_finite()) throw NumericalError("checkpoint parameter '" + p.name + "' is not finite");
    p.var.mutable_leaf_value() = std::move(value);
  }
}

template <typename T>
MTURModel<T> load_checkpoint(const std::filesystem::path& path) {
  const auto sidecar = config_sidecar(path);
  std::ifstream in(sidecar, std::ios::binary);
  if (!in) throw IoError("missing config sidecar " + sidecar.string());
  MTURConfig cfg;
  try {
    cfg = nlohmann::json::parse(in).get<MTURConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(sidecar.string() + ": " + e.what());
  }
  auto model = MTURModel<T>::build(cfg, 0);
  assign_parameters(model, read_mttb(path));
  return model;
}

template void save_checkpoint(const MTURModel<float>&, const std::filesystem::path&);
template void save_checkpoint(const MTURModel<double>&, const std::filesystem::path&);
template void assign_parameters(MTURModel<float>&, const std::vector<MttbEntry>&);
template void assign_parameters(MTURModel<double>&, const std::vector<MttbEntry>&);
template MTURModel<float> load_checkpoint(const std::filesystem::path&);
template MTURModel<double> load_checkpoint(const std::filesystem::path&);

}  // namespace mtur::net
