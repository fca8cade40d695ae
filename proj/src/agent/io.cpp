#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "steerq/agent.hpp"

namespace steerq {

namespace {

struct VariantInfo {
  Variant v;
  const char* name;
  Architecture arch;
  bool equivariant;
  bool augment;
};

constexpr VariantInfo kVariants[] = {
    {Variant::EquiFcn, "equi_fcn", Architecture::Fcn, true, false},
    {Variant::EquiAsr, "equi_asr", Architecture::Asr, true, false},
    {Variant::ConvFcn, "conv_fcn", Architecture::Fcn, false, false},
    {Variant::ConvAsr, "conv_asr", Architecture::Asr, false, false},
    {Variant::RadFcn, "rad_fcn", Architecture::Fcn, false, true},
    {Variant::RadAsr, "rad_asr", Architecture::Asr, false, true},
};

const VariantInfo& info(Variant v) {
  for (const auto& i : kVariants)
    if (i.v == v) return i;
  throw std::logic_error("unknown variant");
}

std::string format(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw std::runtime_error(path.string() + ": expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

void open_for_write(std::ofstream& out, const std::filesystem::path& path) {
  out.open(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

std::string to_string(Variant v) { return info(v).name; }

Variant parse_variant(const std::string& s) {
  for (const auto& i : kVariants)
    if (s == i.name) return i.v;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected equi_fcn, equi_asr, conv_fcn, conv_asr, rad_fcn, rad_asr)");
}

std::vector<Variant> all_variants() {
  std::vector<Variant> out;
  for (const auto& i : kVariants) out.push_back(i.v);
  return out;
}

NetConfig variant_net_config(Variant v, NetConfig base) {
  base.arch = info(v).arch;
  base.equivariant = info(v).equivariant;
  return base;
}

bool variant_augments(Variant v) { return info(v).augment; }

std::string to_string(MarginHeads m) {
  switch (m) {
    case MarginHeads::Both: return "both";
    case MarginHeads::Q1: return "q1";
    case MarginHeads::Q2: return "q2";
  }
  throw std::logic_error("unknown margin heads");
}

MarginHeads parse_margin_heads(const std::string& s) {
  if (s == "both") return MarginHeads::Both;
  if (s == "q1") return MarginHeads::Q1;
  if (s == "q2") return MarginHeads::Q2;
  throw std::invalid_argument("unknown margin_heads '" + s + "' (expected both, q1, q2)");
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows) {
  std::ofstream out;
  open_for_write(out, path);
  out << "episode,env_steps,reward,success,loss,epsilon\n";
  for (const CurveRow& r : rows) {
    out << r.episode << ',' << r.env_steps << ',' << format(r.reward) << ',' << r.success << ','
        << format(r.loss) << ',' << format(r.epsilon) << '\n';
  }
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  std::ofstream out;
  open_for_write(out, path);
  out << "episode,greedy_success_rate\n";
  for (const EvalRow& r : rows) out << r.episode << ',' << format(r.greedy_success_rate) << '\n';
}

std::vector<CurveRow> read_curve_csv(const std::filesystem::path& path) {
  std::vector<CurveRow> out;
  for (const auto& f : read_csv(path, "episode,env_steps,reward,success,loss,epsilon")) {
    if (f.size() != 6) throw std::runtime_error(path.string() + ": malformed row");
    out.push_back({std::stoi(f[0]), std::stol(f[1]), std::stod(f[2]), std::stoi(f[3]),
                   std::stod(f[4]), std::stod(f[5])});
  }
  return out;
}

std::vector<EvalRow> read_eval_csv(const std::filesystem::path& path) {
  std::vector<EvalRow> out;
  for (const auto& f : read_csv(path, "episode,greedy_success_rate")) {
    if (f.size() != 2) throw std::runtime_error(path.string() + ": malformed row");
    out.push_back({std::stoi(f[0]), std::stod(f[1])});
  }
  return out;
}

Checkpoint network_checkpoint(const QNetwork& net, nlohmann::json metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const auto& [name, t] : net.named_parameters()) {
    ckpt.arrays.emplace_back(name, StoredArray{t.shape(), {t.data().begin(), t.data().end()}});
  }
  return ckpt;
}

void load_network(const Checkpoint& ckpt, QNetwork& net) {
  for (auto& [name, t] : net.named_parameters()) {
    if (!ckpt.contains(name)) throw std::runtime_error("checkpoint lacks parameter " + name);
    const StoredArray& a = ckpt.get(name);
    if (a.shape != t.shape()) {
      throw std::runtime_error("checkpoint parameter " + name + " has shape " + shape_str(a.shape) +
                               ", network expects " + shape_str(t.shape()));
    }
    Tensor target = t;
    std::copy(a.values.begin(), a.values.end(), target.mutable_data().begin());
  }
}

}  // namespace steerq
