#include "rfs/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace rfs {

namespace {

std::string yes_no(bool b) { return b ? "true" : "false"; }

std::string optional_real(const std::optional<double>& v) { return v ? format_real(*v) : "none"; }

std::string join_reals(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_real(v[i]);
    return out;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<unsigned char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

void put_real(std::ostream& out, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    put_le<std::uint64_t>(out, bits);
}

double get_real(std::istream& in) {
    const auto bits = get_le<std::uint64_t>(in, "a parameter");
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace

std::vector<std::string> output_header(std::uint64_t seed) {
    return {std::string("artifact: ") + kArtifactVersion, "seed: " + std::to_string(seed)};
}

void write_comment_header(std::ostream& out, std::uint64_t seed) {
    for (const auto& line : output_header(seed)) out << "# " << line << '\n';
}

void write_sweep_csv(std::ostream& out, const SweepTable& table, std::uint64_t seed) {
    write_comment_header(out, seed);
    out << "# axis: " << sweep_axis_name(table.axis) << ", seeds: " << table.seeds.size() << '\n';
    out << "value,mean_j,std_j,stderr_j,nfe\n";
    for (const auto& row : table.rows) {
        out << format_real(row.value) << ',' << format_real(row.mean_j) << ',' << format_real(row.std_j) << ','
            << format_real(row.stderr_j) << ',' << row.nfe << '\n';
    }
}

void write_loss_csv(std::ostream& out, const std::vector<LossSample>& curve, std::uint64_t seed) {
    write_comment_header(out, seed);
    out << "iteration,loss\n";
    for (const auto& s : curve) out << s.iteration << ',' << format_real(s.loss) << '\n';
}

void write_summary(std::ostream& out, const Summary& summary, std::uint64_t seed) {
    write_comment_header(out, seed);
    for (const auto& [k, v] : summary) out << k << ": " << v << '\n';
}

Summary summarize(const FirstOrderReport& r) {
    return {
        {"probes", std::to_string(r.probes)},
        {"alignment_coefficient", format_real(r.alignment_coefficient)},
        {"precondition_holds", yes_no(r.precondition_holds)},
        {"ascent_fraction", format_real(r.ascent_fraction)},
        {"cosine", format_real(r.cosine)},
        {"min_cosine", format_real(r.min_cosine)},
        {"proportionality_residual", format_real(r.proportionality_residual)},
        {"proportionality_constant", optional_real(r.proportionality_constant)},
        {"max_drf_norm", format_real(r.max_drf_norm)},
    };
}

Summary summarize(const RemainderReport& r) {
    return {
        {"probes", std::to_string(r.probes)},
        {"scales", join_reals(r.scales)},
        {"residuals", join_reals(r.residuals)},
        {"exact", yes_no(r.exact)},
        {"slope", optional_real(r.slope)},
    };
}

Summary summarize(const SecondOrderReport& r) {
    Summary s = {
        {"gamma_grid", join_reals(r.gamma_grid)},
        {"delta_j", join_reals(r.delta_j)},
        {"directional_gradient", format_real(r.directional_gradient)},
        {"curvature", format_real(r.curvature)},
        {"concave", yes_no(r.concave)},
        {"gamma_star_closed", optional_real(r.gamma_star_closed)},
        {"gamma_star_empirical", format_real(r.gamma_star_empirical)},
        {"interior_max", yes_no(r.interior_max)},
        {"quadratic_fit_r2", format_real(r.quadratic_fit_r2)},
    };
    for (const auto& hp : r.hessian_sensitivity) {
        s.emplace_back("gamma_star_at_h_" + format_real(hp.h), optional_real(hp.gamma_star));
    }
    return s;
}

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("CSV has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

std::vector<std::pair<double, double>> CsvTable::points(const std::string& x, const std::string& y) const {
    const std::size_t cx = column(x);
    const std::size_t cy = column(y);
    std::vector<std::pair<double, double>> out;
    for (const auto& row : rows) {
        if (cx >= row.size() || cy >= row.size() || row[cx].empty() || row[cy].empty()) continue;
        out.emplace_back(std::stod(row[cx]), std::stod(row[cy]));
    }
    return out;
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!have_header) {
            table.header = split_csv_line(line);
            have_header = true;
        } else {
            table.rows.push_back(split_csv_line(line));
        }
    }
    if (!have_header) throw std::invalid_argument("CSV has no header row");
    return table;
}

void write_svg_plot(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title,
                    const std::string& x_label, const std::string& y_label, PlotMode mode,
                    const std::vector<std::string>& comment_header) {
    constexpr double kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
    static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            x0 = std::min(x0, x), x1 = std::max(x1, x);
            y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    for (const auto& line : comment_header) out << "<!-- " << xml_escape(line) << " -->\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"16\">" << xml_escape(title) << "</text>\n";
    out << "<g stroke=\"black\" stroke-width=\"1\">\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
        << kTop + ph << "\"/>\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph
        << "\"/>\n</g>\n";
    out << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
        << "<text x=\"" << kLeft << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << format_real(x0) << "</text>\n"
        << "<text x=\"" << kLeft + pw << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
        << format_real(x1) << "</text>\n"
        << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + ph << "\" text-anchor=\"end\">" << format_real(y0)
        << "</text>\n"
        << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\">" << format_real(y1)
        << "</text>\n"
        << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n"
        << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << kTop + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n</g>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const char* color = kColors[i % std::size(kColors)];
        const auto& s = series[i];
        if (mode == PlotMode::Line) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& [x, y] : s.points) out << format_real(px(x)) << ',' << format_real(py(y)) << ' ';
            out << "\"/>\n";
        } else {
            out << "<g fill=\"" << color << "\">\n";
            for (const auto& [x, y] : s.points) {
                out << "<circle cx=\"" << format_real(px(x)) << "\" cy=\"" << format_real(py(y)) << "\" r=\"2\"/>\n";
            }
            out << "</g>\n";
        }
        out << "<text x=\"" << kLeft + pw - 4 << "\" y=\"" << kTop + 14 * (i + 1)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">"
            << xml_escape(s.name) << "</text>\n";
    }
    out << "</svg>\n";
}

void save_checkpoint(std::ostream& out, const MlpField& f) {
    out.write("RFCK", 4);
    put_le<std::uint32_t>(out, 1);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.layers().size()));
    for (const auto& layer : f.layers()) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weights.rows()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(layer.weights.cols()));
        for (double w : layer.weights.values()) put_real(out, w);
        for (double b : layer.biases) put_real(out, b);
    }
    put_le<std::uint64_t>(out, f.seed());
    if (!out) throw std::runtime_error("checkpoint write failed");
}

MlpField load_checkpoint(std::istream& in) {
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "RFCK") throw std::runtime_error("not a checkpoint (bad magic)");
    const auto version = get_le<std::uint32_t>(in, "version");
    if (version != 1) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const auto count = get_le<std::uint32_t>(in, "layer count");
    std::vector<MlpField::Layer> layers;
    for (std::uint32_t l = 0; l < count; ++l) {
        const auto rows = get_le<std::uint32_t>(in, "rows");
        const auto cols = get_le<std::uint32_t>(in, "cols");
        std::vector<double> w(static_cast<std::size_t>(rows) * cols);
        for (auto& v : w) v = get_real(in);
        std::vector<double> b(rows);
        for (auto& v : b) v = get_real(in);
        layers.push_back({RealMat(rows, cols, std::move(w)), RealVec(std::move(b))});
    }
    const auto seed = get_le<std::uint64_t>(in, "seed");
    return MlpField(std::move(layers), seed);
}

void save_checkpoint(const std::string& path, const MlpField& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    save_checkpoint(out, f);
}

MlpField load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    return load_checkpoint(in);
}

std::string RunRecord::to_json() const {
    nlohmann::ordered_json j;
    j["artifact_version"] = artifact_version;
    j["mode"] = mode;
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config) cfg[k] = v;
    j["config"] = cfg;
    j["seeds"] = seeds;
    j["per_seed"] = nlohmann::ordered_json::array();
    for (const auto& s : per_seed) {
        j["per_seed"].push_back({{"seed", s.seed},
                                 {"class", s.klass},
                                 {"final_j", s.final_j},
                                 {"nfe", s.nfe},
                                 {"trajectory", s.trajectory_path}});
    }
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j.dump(2) + "\n";
}

RunRecord RunRecord::from_json(const std::string& text) {
    const auto j = nlohmann::ordered_json::parse(text);
    RunRecord r;
    r.artifact_version = j.at("artifact_version").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& s : j.at("per_seed")) {
        SeedRecord rec;
        rec.seed = s.at("seed").get<std::uint64_t>();
        rec.klass = s.at("class").get<std::size_t>();
        rec.final_j = s.at("final_j").get<double>();
        rec.nfe = s.at("nfe").get<std::size_t>();
        rec.trajectory_path = s.at("trajectory").get<std::string>();
        r.per_seed.push_back(rec);
    }
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    return r;
}

}  // namespace rfs
