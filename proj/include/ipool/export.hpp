#pragma once

#include "ipool/config.hpp"
#include "ipool/trial.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipool {

// ---------------------------------------------------------------------------
// Per-run trial record files

/// Header of the trial record CSV, in column order.
const std::vector<std::string>& record_columns();

/// One row per decision point. Unavailable rows leave action and probability empty.
void write_records_csv(std::ostream& out, std::span<const TrialRecord> records);
/// Parses and validates every row; errors carry the line number.
std::vector<TrialRecord> read_records_csv(std::istream& in, const ClipBounds& clip = {});

/// Throws std::invalid_argument when a record breaks a protocol invariant.
void validate_record(const TrialRecord& record, const ClipBounds& clip);

/// One (policy, setting) cell of a simulate grid.
struct RunCell {
    PolicyKind policy = PolicyKind::IntelligentPooling;
    PopulationSetting setting = PopulationSetting::Smooth;
    std::uint64_t seed = 0;
};

/// `{policy}_{setting}_{seed}`
std::string cell_stem(const RunCell& cell);

/// Config echo (with this cell's policy and setting), trial seeds and the aggregate table.
std::string summary_json(const RunConfig& config, const RunCell& cell, const AggregateTable& table);

/// Writes `{stem}.csv` and `{stem}.json` into `dir`; returns the CSV path.
std::filesystem::path write_run(const std::filesystem::path& dir, const RunConfig& config, const RunCell& cell,
                                std::span<const std::vector<TrialRecord>> trials);

// ---------------------------------------------------------------------------
// Tidy tables for the plot renderer

class EmptyRunError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One run directory entry, re-aggregated from its record CSV.
struct LoadedRun {
    RunCell cell;
    bool burden = false;
    TrialConfig trial;
    AggregateTable table;
    std::vector<double> probabilities;  // every logged probability
};

/// Every `{stem}.csv` with a sibling `{stem}.json` in `run_dir`, sorted by
/// stem. Throws EmptyRunError when there is none.
std::vector<LoadedRun> load_runs(const std::filesystem::path& run_dir);

/// Writes regret_by_week.csv, group_send.csv, cohort_send.csv and
/// probabilities.csv into `out_dir`; returns their paths.
std::vector<std::filesystem::path> export_plot_data(const std::filesystem::path& run_dir,
                                                    const std::filesystem::path& out_dir);

}  // namespace ipool
