#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rfs/config.hpp"
#include "rfs/theory.hpp"
#include "rfs/train.hpp"

namespace rfs {

/// Lines every output file starts with: artifact version and resolved seed.
std::vector<std::string> output_header(std::uint64_t seed);
void write_comment_header(std::ostream& out, std::uint64_t seed);

void write_sweep_csv(std::ostream& out, const SweepTable& table, std::uint64_t seed);
void write_loss_csv(std::ostream& out, const std::vector<LossSample>& curve, std::uint64_t seed);

/// `key: value` lines.
using Summary = std::vector<std::pair<std::string, std::string>>;
void write_summary(std::ostream& out, const Summary& summary, std::uint64_t seed);
Summary summarize(const FirstOrderReport& r);
Summary summarize(const RemainderReport& r);
Summary summarize(const SecondOrderReport& r);

/// A parsed CSV: '#' comment lines are skipped, the first row is the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;
    /// Numeric values of a column; empty cells are skipped with their row.
    std::vector<std::pair<double, double>> points(const std::string& x, const std::string& y) const;
};

CsvTable read_csv(std::istream& in);

struct PlotSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

enum class PlotMode { Line, Scatter };

/// Minimal SVG 1.1 chart: axes with min/max tick labels and one polyline
/// (or circle set) per series.
void write_svg_plot(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title,
                    const std::string& x_label, const std::string& y_label, PlotMode mode,
                    const std::vector<std::string>& comment_header = {});

/// Binary checkpoint: "RFCK", u32 version = 1, u32 layer count, per layer
/// u32 rows, u32 cols, rows*cols f64 weights (row-major) then rows f64
/// biases; trailing u64 seed. All little-endian.
void save_checkpoint(std::ostream& out, const MlpField& f);
MlpField load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const MlpField& f);
MlpField load_checkpoint(const std::string& path);

struct SeedRecord {
    std::uint64_t seed = 0;
    std::size_t klass = 0;
    double final_j = 0.0;
    std::size_t nfe = 0;
    std::string trajectory_path;
};

/// Everything needed to replay a sampling run.
struct RunRecord {
    std::string artifact_version = kArtifactVersion;
    std::string mode;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::uint64_t> seeds;
    std::vector<SeedRecord> per_seed;
    double wall_clock_seconds = 0.0;

    std::string to_json() const;
    static RunRecord from_json(const std::string& text);
};

}  // namespace rfs
