#include "npmle/serialize.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "npmle/error.hpp"

namespace npmle {

using json = nlohmann::json;

namespace {

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
}

void expect(const json& j, const std::string& type) {
  if (!j.is_object()) throw InvalidArgument("JSON document is not an object");
  if (!j.contains("v") || j["v"] != 1) throw InvalidArgument("JSON document lacks schema version \"v\": 1");
  if (!j.contains("type") || !j["type"].is_string()) throw InvalidArgument("JSON document lacks \"type\"");
  if (j["type"] != type) {
    throw InvalidArgument("expected a \"" + type + "\" document, got \"" + j["type"].get<std::string>() + "\"");
  }
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(std::string("JSON document lacks \"") + key + "\"");
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad field \"") + key + "\": " + e.what());
  }
}

json mixing_json(const DiscreteMixing& g) {
  json atoms = json::array();
  json weights = json::array();
  for (std::size_t j = 0; j < g.size(); ++j) {
    atoms.push_back(g.atom(j));
    weights.push_back(g.weight(j));
  }
  return {{"v", 1}, {"type", "mixing"}, {"atoms", atoms}, {"weights", weights}};
}

json certificate_json(const Certificate& c) {
  return {{"v", 1},
          {"type", "certificate"},
          {"loglik", c.loglik},
          {"gap", c.gap},
          {"sweeps", c.sweeps},
          {"support_size", c.support_size},
          {"certified", c.certified},
          {"probes", c.probes}};
}

}  // namespace

std::string kernel_to_json(const KernelSpec& k) {
  return json{{"v", 1}, {"type", "kernel"}, {"d", k.d}, {"b", k.b}, {"theta_lo", k.theta_lo}, {"theta_hi", k.theta_hi}}
      .dump();
}

KernelSpec kernel_from_json(const std::string& text) {
  const json j = parse(text);
  expect(j, "kernel");
  KernelSpec k;
  k.d = field<int>(j, "d");
  k.b = field<int>(j, "b");
  k.theta_lo = field<std::vector<double>>(j, "theta_lo");
  k.theta_hi = field<std::vector<double>>(j, "theta_hi");
  k.validate();
  return k;
}

std::string mixing_to_json(const DiscreteMixing& g) { return mixing_json(g).dump(); }

std::string fit_to_json(const NpmleFit& fit) {
  json j = mixing_json(fit.g);
  j["certificate"] = certificate_json(fit.cert);
  return j.dump();
}

std::string certificate_to_json(const Certificate& c) { return certificate_json(c).dump(); }

Certificate certificate_from_json(const std::string& text) {
  json j = parse(text);
  if (j.is_object() && j.contains("certificate")) j = j["certificate"];
  expect(j, "certificate");
  Certificate c;
  c.loglik = field<double>(j, "loglik");
  c.gap = field<double>(j, "gap");
  c.sweeps = field<int>(j, "sweeps");
  c.support_size = field<int>(j, "support_size");
  c.certified = field<bool>(j, "certified");
  c.probes = field<std::size_t>(j, "probes");
  return c;
}

std::string bounds_to_json(const SeriesBound& b) {
  return json{{"v", 1},
              {"type", "chi_square_bounds"},
              {"theta0", b.theta0},
              {"lower", b.lower},
              {"upper_partial", b.upper_partial},
              {"tail_estimate", b.tail_estimate},
              {"upper", b.upper_partial + b.tail_estimate},
              {"kmax", b.kmax},
              {"C0_bound", b.C0_bound},
              {"tail_small", b.tail_small}}
      .dump();
}

MixingDescriptor descriptor_from_json(const std::string& text) {
  const json j = parse(text);
  if (j.is_object() && j.contains("type") && j["type"] == "uniform") {
    expect(j, "uniform");
    MixingDescriptor d;
    d.uniform = true;
    d.box = UniformBox{field<std::vector<double>>(j, "lo"), field<std::vector<double>>(j, "hi")};
    if (d.box.lo.size() != d.box.hi.size() || d.box.lo.empty()) {
      throw InvalidArgument("uniform document: lo and hi must have the same nonzero length");
    }
    for (std::size_t l = 0; l < d.box.lo.size(); ++l) {
      if (!(d.box.lo[l] < d.box.hi[l])) throw InvalidArgument("uniform document: need lo < hi");
    }
    return d;
  }
  expect(j, "mixing");
  MixingDescriptor d;
  d.discrete = DiscreteMixing(field<std::vector<Point>>(j, "atoms"), field<std::vector<double>>(j, "weights"));
  return d;
}

DiscreteMixing mixing_from_json(const std::string& text, int atoms) {
  return descriptor_from_json(text).as_discrete(atoms);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path + " for writing");
  out << text << '\n';
  if (!out) throw NumericalError("write failed: " + path);
}

KernelSpec load_kernel(const std::string& path) { return kernel_from_json(read_text_file(path)); }
MixingDescriptor load_descriptor(const std::string& path) { return descriptor_from_json(read_text_file(path)); }
DiscreteMixing load_mixing(const std::string& path, int atoms) {
  return mixing_from_json(read_text_file(path), atoms);
}

}  // namespace npmle
