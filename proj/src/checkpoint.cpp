#include "cap/checkpoint.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cap/util.hpp"

namespace cap {

namespace {
constexpr const char* kMagic = "cap-checkpoint v1";
}

void save_checkpoint(const std::string& path,
                     const std::map<std::string, std::string>& config, const Vocab& vocab,
                     const ParamStore& params) {
  std::ostringstream out;
  out << kMagic << "\n";
  out << "[config]\n";
  for (const auto& [k, v] : config) out << k << "=" << v << "\n";
  out << "[vocab]\n";
  const auto tokens = vocab.content_tokens();
  out << tokens.size() << "\n";
  for (const auto& t : tokens) out << t << "\n";
  out << "[tensors]\n";
  out << params.items().size() << "\n";
  for (const auto& [name, t] : params.items()) {
    out << "name " << name << "\n";
    out << "shape " << t.shape().size();
    for (int d : t.shape()) out << " " << d;
    out << "\n";
    out << "data";
    for (double v : t.data()) out << " " << format_double(v);
    out << "\n";
  }
  write_file(path, out.str());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open checkpoint: " + path);
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) fail(std::string("checkpoint: truncated file, expected ") + what);
    return line;
  };
  if (next_line("magic") != kMagic) fail("checkpoint: bad magic line");
  if (next_line("[config]") != "[config]") fail("checkpoint: missing [config] section");

  LoadedCheckpoint cp;
  while (next_line("config entry or [vocab]") != "[vocab]") {
    const auto pos = line.find('=');
    if (pos == std::string::npos) fail("checkpoint: malformed config line: " + line);
    cp.config[line.substr(0, pos)] = line.substr(pos + 1);
  }
  const long n_vocab = std::strtol(next_line("vocab count").c_str(), nullptr, 10);
  for (long i = 0; i < n_vocab; ++i) cp.vocab_tokens.push_back(next_line("vocab token"));
  if (next_line("[tensors]") != "[tensors]") fail("checkpoint: missing [tensors] section");
  const long n_tensors = std::strtol(next_line("tensor count").c_str(), nullptr, 10);
  for (long i = 0; i < n_tensors; ++i) {
    std::string name_line = next_line("tensor name");
    if (name_line.rfind("name ", 0) != 0) fail("checkpoint: malformed tensor name: " + name_line);
    const std::string name = name_line.substr(5);

    std::istringstream shape_ss(next_line("tensor shape"));
    std::string tag;
    shape_ss >> tag;
    if (tag != "shape") fail("checkpoint: malformed shape line for '" + name + "'");
    int rank = 0;
    shape_ss >> rank;
    std::vector<int> shape;
    std::size_t count = 1;
    for (int r = 0; r < rank; ++r) {
      int d = 0;
      if (!(shape_ss >> d)) fail("checkpoint: truncated shape for '" + name + "'");
      shape.push_back(d);
      count *= static_cast<std::size_t>(d);
    }

    std::string data_line = next_line("tensor data");
    if (data_line.rfind("data", 0) != 0) fail("checkpoint: malformed data line for '" + name + "'");
    std::vector<double> values;
    values.reserve(count);
    const char* p = data_line.c_str() + 4;
    char* end = nullptr;
    for (std::size_t k = 0; k < count; ++k) {
      const double v = std::strtod(p, &end);
      if (end == p) fail("checkpoint: truncated data for '" + name + "'");
      values.push_back(v);
      p = end;
    }
    cp.tensors.emplace_back(name, Tensor::from_values(shape, std::move(values)));
  }
  return cp;
}

void restore_params(ParamStore& params, const LoadedCheckpoint& cp) {
  if (cp.tensors.size() != params.items().size())
    fail("checkpoint: tensor count " + std::to_string(cp.tensors.size()) +
         " does not match model parameter count " + std::to_string(params.items().size()));
  for (const auto& [name, loaded] : cp.tensors) {
    Tensor target = params.get(name);
    if (target.shape() != loaded.shape())
      fail("checkpoint: shape mismatch for '" + name + "': " + shape_str(loaded.shape()) +
           " vs " + shape_str(target.shape()));
    target.data() = loaded.data();
  }
}

}  // namespace cap
