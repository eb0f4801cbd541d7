#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stzoo/archspec.hpp"
#include "stzoo/protocols.hpp"
#include "stzoo/sampling.hpp"

namespace stzoo {

// One experiment result row. (family, backbone, frames, temporal_pool,
// dataset, sampling, level, clips, crops) is the unique key; accuracies are
// on the 0-100 scale.
struct RunRecord {
  Family family = Family::TSN;
  Backbone backbone = Backbone::TinyNet;
  int64_t frames = 8;
  bool temporal_pool = false;
  std::string dataset;
  Strategy sampling = Strategy::Uniform;
  EvalLevel level = EvalLevel::Clip;
  int clips = 1;
  int crops = 1;
  double top1 = 0.0;
  double top5 = 0.0;
  int64_t flops = 0;
  int64_t params = 0;
};

// results.csv:
// family,backbone,frames,temporal_pool,dataset,sampling,level,clips,crops,top1,top5,flops,params
std::string run_record_header();
std::string format_run_record(const RunRecord& r);
RunRecord parse_run_record(const std::string& line);
std::vector<RunRecord> load_records(const std::string& path);
void append_record(const std::string& path, const RunRecord& r);

struct DisentangleRow {
  Family family;
  Backbone backbone;
  int64_t frames;
  bool temporal_pool;
  std::string dataset;
  double s_model;  // S_a
  double s_tsn;    // baseline: TSN, same backbone/frames/dataset, no temporal pooling
  double phi;      // S_tsn / max(S_a, S_tsn)
  double psi;      // (S_a - S_tsn) / (100 - S_tsn)
};

struct DisentangleAggregate {
  Family family;
  bool temporal_pool;
  std::string dataset;
  double phi_bar;
  double psi_bar;
  int z;  // normalizer |B| * |K| (or cells used when partial averaging)
  std::vector<Backbone> backbones;
  std::vector<int64_t> frames;
};

struct DisentanglementReport {
  std::vector<DisentangleRow> rows;
  std::vector<DisentangleAggregate> aggregates;
};

// Per-model spatial contribution and temporal improvement plus per-family
// means over the backbone x frame-count grid. Every non-baseline record needs
// a TSN (no-tp) baseline with the same backbone, frames, dataset and
// evaluation settings. allow_partial averages the cells present instead of
// erroring on an incomplete grid.
DisentanglementReport disentangle(const std::vector<RunRecord>& records,
                                  bool allow_partial = false);

struct TpGainRow {
  Family family;
  Backbone backbone;
  int64_t frames;
  std::string dataset;
  double s_tp;
  double s_no_tp;
  double gain;  // S_tp - S_no_tp
};

struct TpGainReport {
  std::vector<TpGainRow> rows;
  std::vector<std::string> missing;  // unpaired record keys, reported not dropped
};

TpGainReport tp_gain(const std::vector<RunRecord>& records);

struct AccFlopsRow {
  std::string model;
  int64_t frames;
  std::string dataset;
  int clips;
  int crops;
  int64_t total_flops;  // 1-clip flops * clips * crops
  double top1;
};

// Total evaluation cost per record, sorted ascending by cost.
std::vector<AccFlopsRow> acc_vs_flops(const std::vector<RunRecord>& records);

std::string format_disentangle_csv(const DisentanglementReport& report);
std::string format_tp_gain_csv(const TpGainReport& report);
std::string format_acc_flops_csv(const std::vector<AccFlopsRow>& rows);

}  // namespace stzoo
