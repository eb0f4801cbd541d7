#include "stzoo/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "stzoo/common.hpp"

namespace stzoo {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::string run_record_header() {
  return "family,backbone,frames,temporal_pool,dataset,sampling,level,clips,crops,top1,top5,"
         "flops,params";
}

std::string format_run_record(const RunRecord& r) {
  std::ostringstream os;
  os << to_string(r.family) << "," << to_string(r.backbone) << "," << r.frames << ","
     << (r.temporal_pool ? "true" : "false") << "," << r.dataset << "," << to_string(r.sampling)
     << "," << to_string(r.level) << "," << r.clips << "," << r.crops << "," << fmt_double(r.top1)
     << "," << fmt_double(r.top5) << "," << r.flops << "," << r.params;
  return os.str();
}

RunRecord parse_run_record(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (fields.size() != 13) throw DataError(cat("bad results row '", line, "'"));
  RunRecord r;
  r.family = family_from_string(fields[0]);
  r.backbone = backbone_from_string(fields[1]);
  r.frames = std::stoll(fields[2]);
  if (fields[3] != "true" && fields[3] != "false")
    throw DataError(cat("bad temporal_pool value '", fields[3], "'"));
  r.temporal_pool = fields[3] == "true";
  r.dataset = fields[4];
  r.sampling = strategy_from_string(fields[5]);
  r.level = eval_level_from_string(fields[6]);
  r.clips = std::stoi(fields[7]);
  r.crops = std::stoi(fields[8]);
  r.top1 = std::stod(fields[9]);
  r.top5 = std::stod(fields[10]);
  r.flops = std::stoll(fields[11]);
  r.params = std::stoll(fields[12]);
  if (r.top1 < 0.0 || r.top1 > 100.0) throw DataError(cat("top1 out of [0,100] in '", line, "'"));
  return r;
}

std::vector<RunRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(cat("cannot open results file '", path, "'"));
  std::string line;
  if (!std::getline(in, line)) throw DataError(cat("empty results file '", path, "'"));
  if (line != run_record_header()) throw DataError(cat("bad results header in '", path, "'"));
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_run_record(line));
  }
  return out;
}

void append_record(const std::string& path, const RunRecord& r) {
  bool fresh = !std::ifstream(path).good();
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError(cat("cannot append to results file '", path, "'"));
  if (fresh) out << run_record_header() << "\n";
  out << format_run_record(r) << "\n";
}

namespace {

// evaluation context shared by a target record and its baseline
struct EvalKey {
  std::string dataset;
  Strategy sampling;
  EvalLevel level;
  int clips, crops;
  auto operator<=>(const EvalKey&) const = default;
};

struct CellKey {
  Backbone backbone;
  int64_t frames;
  auto operator<=>(const CellKey&) const = default;
};

std::string describe_baseline(const RunRecord& r) {
  return cat("TSN-", to_string(r.backbone), " frames=", r.frames, " dataset=", r.dataset,
             " sampling=", to_string(r.sampling), " level=", to_string(r.level), " clips=",
             r.clips, " crops=", r.crops, " temporal_pool=false");
}

}  // namespace

DisentanglementReport disentangle(const std::vector<RunRecord>& records, bool allow_partial) {
  // baseline lookup: TSN without temporal pooling, same (b, k, dataset) and
  // the same evaluation settings
  std::map<std::pair<EvalKey, CellKey>, const RunRecord*> baselines;
  for (const auto& r : records)
    if (r.family == Family::TSN && !r.temporal_pool)
      baselines[{EvalKey{r.dataset, r.sampling, r.level, r.clips, r.crops},
                 CellKey{r.backbone, r.frames}}] = &r;

  DisentanglementReport report;
  // group rows for the per-family aggregates by (family, tp, eval context)
  struct GroupKey {
    Family family;
    bool tp;
    EvalKey eval;
    auto operator<=>(const GroupKey&) const = default;
  };
  std::map<GroupKey, std::vector<DisentangleRow>> groups;

  for (const auto& r : records) {
    if (r.family == Family::TSN && !r.temporal_pool) continue;  // the baseline itself
    EvalKey ek{r.dataset, r.sampling, r.level, r.clips, r.crops};
    auto it = baselines.find({ek, CellKey{r.backbone, r.frames}});
    if (it == baselines.end())
      throw DataError(cat("disentangle: missing TSN baseline record for ", describe_baseline(r)));
    double s_tsn = it->second->top1;
    if (s_tsn >= 100.0)
      throw DataError(cat("disentangle: S_TSN = 100 for ", describe_baseline(r),
                          " (temporal improvement undefined)"));
    DisentangleRow row;
    row.family = r.family;
    row.backbone = r.backbone;
    row.frames = r.frames;
    row.temporal_pool = r.temporal_pool;
    row.dataset = r.dataset;
    row.s_model = r.top1;
    row.s_tsn = s_tsn;
    row.phi = s_tsn / std::max(r.top1, s_tsn);
    row.psi = (r.top1 - s_tsn) / (100.0 - s_tsn);
    report.rows.push_back(row);
    groups[GroupKey{row.family, row.temporal_pool, ek}].push_back(row);
  }

  for (auto& [key, rows] : groups) {
    std::set<Backbone> bs;
    std::set<int64_t> ks;
    for (const auto& row : rows) {
      bs.insert(row.backbone);
      ks.insert(row.frames);
    }
    size_t full = bs.size() * ks.size();
    if (rows.size() != full && !allow_partial) {
      throw DataError(cat("disentangle: incomplete backbone x frames grid for ",
                          to_string(key.family), " on ", key.eval.dataset, " (", rows.size(),
                          " of ", full, " cells; pass --allow-partial to average what exists)"));
    }
    DisentangleAggregate agg;
    agg.family = key.family;
    agg.temporal_pool = key.tp;
    agg.dataset = key.eval.dataset;
    agg.backbones.assign(bs.begin(), bs.end());
    agg.frames.assign(ks.begin(), ks.end());
    agg.z = static_cast<int>(rows.size() == full ? full : rows.size());
    double sp = 0.0, st = 0.0;
    for (const auto& row : rows) {
      sp += row.phi;
      st += row.psi;
    }
    agg.phi_bar = sp / agg.z;
    agg.psi_bar = st / agg.z;
    report.aggregates.push_back(agg);
  }
  return report;
}

TpGainReport tp_gain(const std::vector<RunRecord>& records) {
  struct Key {
    Family family;
    Backbone backbone;
    int64_t frames;
    std::string dataset;
    Strategy sampling;
    EvalLevel level;
    int clips, crops;
    auto operator<=>(const Key&) const = default;
  };
  std::map<Key, std::pair<const RunRecord*, const RunRecord*>> pairs;  // (tp, no-tp)
  for (const auto& r : records) {
    Key k{r.family, r.backbone, r.frames, r.dataset, r.sampling, r.level, r.clips, r.crops};
    auto& slot = pairs[k];
    (r.temporal_pool ? slot.first : slot.second) = &r;
  }
  TpGainReport report;
  for (const auto& [k, pr] : pairs) {
    if (pr.first && pr.second) {
      TpGainRow row;
      row.family = k.family;
      row.backbone = k.backbone;
      row.frames = k.frames;
      row.dataset = k.dataset;
      row.s_tp = pr.first->top1;
      row.s_no_tp = pr.second->top1;
      row.gain = pr.first->top1 - pr.second->top1;
      report.rows.push_back(row);
    } else {
      const RunRecord* present = pr.first ? pr.first : pr.second;
      report.missing.push_back(cat(to_string(k.family), "-", to_string(k.backbone), " frames=",
                                   k.frames, " dataset=", k.dataset, " has only the ",
                                   present->temporal_pool ? "tp" : "no-tp", " record"));
    }
  }
  return report;
}

std::vector<AccFlopsRow> acc_vs_flops(const std::vector<RunRecord>& records) {
  std::vector<AccFlopsRow> rows;
  for (const auto& r : records) {
    AccFlopsRow row;
    ArchSpec spec;
    spec.family = r.family;
    spec.backbone = r.backbone;
    spec.temporal_pool = r.temporal_pool;
    spec.frames = r.frames;
    row.model = canonical_name(spec);
    row.frames = r.frames;
    row.dataset = r.dataset;
    row.clips = r.clips;
    row.crops = r.crops;
    row.total_flops = r.flops * r.clips * r.crops;
    row.top1 = r.top1;
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AccFlopsRow& a, const AccFlopsRow& b) {
                     return a.total_flops < b.total_flops;
                   });
  return rows;
}

std::string format_disentangle_csv(const DisentanglementReport& report) {
  std::ostringstream os;
  os << "family,backbone,frames,temporal_pool,dataset,s_model,s_tsn,phi,psi\n";
  for (const auto& r : report.rows)
    os << to_string(r.family) << "," << to_string(r.backbone) << "," << r.frames << ","
       << (r.temporal_pool ? "true" : "false") << "," << r.dataset << "," << fmt_double(r.s_model)
       << "," << fmt_double(r.s_tsn) << "," << fmt_double(r.phi) << "," << fmt_double(r.psi)
       << "\n";
  os << "\nfamily,temporal_pool,dataset,phi_bar,psi_bar,z\n";
  for (const auto& a : report.aggregates)
    os << to_string(a.family) << "," << (a.temporal_pool ? "true" : "false") << "," << a.dataset
       << "," << fmt_double(a.phi_bar) << "," << fmt_double(a.psi_bar) << "," << a.z << "\n";
  return os.str();
}

std::string format_tp_gain_csv(const TpGainReport& report) {
  std::ostringstream os;
  os << "family,backbone,frames,dataset,s_tp,s_no_tp,gain\n";
  for (const auto& r : report.rows)
    os << to_string(r.family) << "," << to_string(r.backbone) << "," << r.frames << ","
       << r.dataset << "," << fmt_double(r.s_tp) << "," << fmt_double(r.s_no_tp) << ","
       << fmt_double(r.gain) << "\n";
  if (!report.missing.empty()) {
    os << "\nmissing_pairs\n";
    for (const auto& m : report.missing) os << m << "\n";
  }
  return os.str();
}

std::string format_acc_flops_csv(const std::vector<AccFlopsRow>& rows) {
  std::ostringstream os;
  os << "model,frames,dataset,clips,crops,total_flops,top1\n";
  for (const auto& r : rows)
    os << r.model << "," << r.frames << "," << r.dataset << "," << r.clips << "," << r.crops
       << "," << r.total_flops << "," << fmt_double(r.top1) << "\n";
  return os.str();
}

}  // namespace stzoo
