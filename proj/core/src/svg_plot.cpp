#include "softworld/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "softworld/errors.hpp"

namespace softworld::cli {

namespace {

constexpr int kWidth = 760;
constexpr int kHeight = 480;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 160;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 48;

const char* kPalette[] = {"#3366cc", "#dc3912", "#ff9900", "#109618", "#990099", "#0099c6"};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

std::vector<CurveGroup> curves_from_csv_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(dir)) {
        for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no metrics CSV files under " + dir.string());

    // (variant, seed) -> episode -> reward sum
    std::map<std::pair<std::string, std::string>, std::map<int, double>> sums;
    for (const auto& file : files) {
        std::ifstream in(file);
        std::string line;
        if (!std::getline(in, line)) continue;  // header
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() < 8) continue;
            const int episode = std::stoi(cells[0]);
            const double reward = std::stod(cells[2]);
            sums[{cells[6], cells[7]}][episode] += reward;
        }
    }
    std::map<std::string, CurveGroup> groups;
    for (const auto& [key, by_episode] : sums) {
        CurveGroup& g = groups[key.first];
        g.label = key.first;
        std::vector<double> series;
        if (!by_episode.empty()) {
            const int last = by_episode.rbegin()->first;
            series.assign(static_cast<size_t>(last) + 1, 0.0);
            for (const auto& [ep, val] : by_episode) series[static_cast<size_t>(ep)] = val;
        }
        g.runs.push_back(std::move(series));
    }
    std::vector<CurveGroup> out;
    for (auto& [label, g] : groups) out.push_back(std::move(g));
    return out;
}

void write_learning_curves_svg(const std::filesystem::path& path, const std::string& title,
                               const std::vector<CurveGroup>& groups) {
    if (groups.empty()) throw IoError("no curve groups to plot");
    size_t max_len = 0;
    double y_min = 1e300, y_max = -1e300;
    for (const CurveGroup& g : groups) {
        for (const auto& run : g.runs) {
            max_len = std::max(max_len, run.size());
            for (double v : run) {
                y_min = std::min(y_min, v);
                y_max = std::max(y_max, v);
            }
        }
    }
    if (max_len < 1) throw IoError("curve groups are empty");
    if (y_min == y_max) {
        y_min -= 1.0;
        y_max += 1.0;
    }
    const double pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    const double plot_w = kWidth - kMarginLeft - kMarginRight;
    const double plot_h = kHeight - kMarginTop - kMarginBottom;
    auto x_of = [&](double ep) {
        return kMarginLeft + (max_len > 1 ? ep / static_cast<double>(max_len - 1) : 0.5) * plot_w;
    };
    auto y_of = [&](double v) {
        return kMarginTop + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;
    };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << kMarginLeft << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
        << title << "</text>\n";

    // axes
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\""
        << kMarginLeft + plot_w << "\" y2=\"" << kMarginTop + plot_h
        << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << kMarginTop + plot_h << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = y_min + (y_max - y_min) * tick / 4.0;
        const double y = y_of(v);
        svg << "<line x1=\"" << kMarginLeft - 4 << "\" y1=\"" << fmt(y) << "\" x2=\""
            << kMarginLeft << "\" y2=\"" << fmt(y) << "\" stroke=\"#444\"/>\n"
            << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << fmt(y + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v)
            << "</text>\n";
        const double ep = (max_len - 1) * tick / 4.0;
        const double x = x_of(ep);
        svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\"" << fmt(x)
            << "\" y2=\"" << kMarginTop + plot_h + 4 << "\" stroke=\"#444\"/>\n"
            << "<text x=\"" << fmt(x) << "\" y=\"" << kMarginTop + plot_h + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(std::round(ep)) << "</text>\n";
    }
    svg << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">episode</text>\n";
    svg << "<text x=\"16\" y=\"" << kMarginTop + plot_h / 2
        << "\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
        << kMarginTop + plot_h / 2 << ")\" text-anchor=\"middle\">episode reward</text>\n";

    for (size_t gi = 0; gi < groups.size(); ++gi) {
        const CurveGroup& g = groups[gi];
        const char* color = kPalette[gi % 6];
        size_t len = 0;
        for (const auto& run : g.runs) len = std::max(len, run.size());
        if (len == 0) continue;
        // mean and min/max band across runs
        std::vector<double> mean(len, 0.0), lo(len, 1e300), hi(len, -1e300);
        std::vector<int> counts(len, 0);
        for (const auto& run : g.runs) {
            for (size_t i = 0; i < run.size(); ++i) {
                mean[i] += run[i];
                lo[i] = std::min(lo[i], run[i]);
                hi[i] = std::max(hi[i], run[i]);
                ++counts[i];
            }
        }
        for (size_t i = 0; i < len; ++i) mean[i] /= std::max(1, counts[i]);

        if (g.runs.size() > 1) {
            svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
            for (size_t i = 0; i < len; ++i) {
                svg << fmt(x_of(static_cast<double>(i))) << "," << fmt(y_of(hi[i])) << " ";
            }
            for (size_t i = len; i > 0; --i) {
                svg << fmt(x_of(static_cast<double>(i - 1))) << "," << fmt(y_of(lo[i - 1])) << " ";
            }
            svg << "\"/>\n";
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\" points=\"";
        for (size_t i = 0; i < len; ++i) {
            svg << fmt(x_of(static_cast<double>(i))) << "," << fmt(y_of(mean[i])) << " ";
        }
        svg << "\"/>\n";
        // legend
        const double ly = kMarginTop + 18.0 * static_cast<double>(gi);
        svg << "<line x1=\"" << kMarginLeft + plot_w + 12 << "\" y1=\"" << fmt(ly) << "\" x2=\""
            << kMarginLeft + plot_w + 34 << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << kMarginLeft + plot_w + 40 << "\" y=\"" << fmt(ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << g.label << "</text>\n";
    }
    svg << "</svg>\n";

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write SVG: " + path.string());
    out << svg.str();
}

}  // namespace softworld::cli
