#include "wdyn/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace wdyn::svg {

namespace {

constexpr double kWidth = 720.0;
constexpr double kPanelHeight = 260.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 40.0;
constexpr std::size_t kMaxHeatmapColumns = 256;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Frame {
    double y0 = 0.0; // top of the panel
    double x_lo = 0.0, x_hi = 1.0;
    double y_lo = 0.0, y_hi = 1.0;
    bool log_y = false;

    double plot_w() const { return kWidth - kLeft - kRight; }
    double plot_h() const { return kPanelHeight - kTop - kBottom; }
    double px(double x) const {
        return kLeft + (x_hi > x_lo ? (x - x_lo) / (x_hi - x_lo) : 0.5) * plot_w();
    }
    double py(double y) const {
        double lo = y_lo, hi = y_hi;
        if (log_y) {
            y = std::log10(y);
            lo = std::log10(lo);
            hi = std::log10(hi);
        }
        const double f = hi > lo ? (y - lo) / (hi - lo) : 0.5;
        return y0 + kTop + (1.0 - f) * plot_h();
    }
};

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

void axes(std::ostringstream& out, const Frame& f, const std::string& title, const std::string& x_name,
          const std::string& y_name) {
    const double bottom = f.y0 + kTop + f.plot_h();
    out << "<g>\n";
    out << "<text x=\"" << num(kWidth / 2) << "\" y=\"" << num(f.y0 + 18) << "\" text-anchor=\"middle\">" << title
        << "</text>\n";
    out << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(f.y0 + kTop) << "\" width=\"" << num(f.plot_w())
        << "\" height=\"" << num(f.plot_h()) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(kLeft) << "\" y=\"" << num(bottom + 16) << "\" text-anchor=\"middle\">"
        << label(f.x_lo) << "</text>\n";
    out << "<text x=\"" << num(kLeft + f.plot_w()) << "\" y=\"" << num(bottom + 16) << "\" text-anchor=\"middle\">"
        << label(f.x_hi) << "</text>\n";
    out << "<text x=\"" << num(kLeft + f.plot_w() / 2) << "\" y=\"" << num(bottom + 32)
        << "\" text-anchor=\"middle\">" << x_name << "</text>\n";
    out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(bottom) << "\" text-anchor=\"end\">" << label(f.y_lo)
        << "</text>\n";
    out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.y0 + kTop + 10) << "\" text-anchor=\"end\">"
        << label(f.y_hi) << "</text>\n";
    out << "<text x=\"14\" y=\"" << num(f.y0 + kTop + f.plot_h() / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
        << num(f.y0 + kTop + f.plot_h() / 2) << ")\">" << y_name << "</text>\n";
    out << "</g>\n";
}

void line_panel(std::ostringstream& out, double y0, const std::string& title, const std::string& y_name,
                const std::vector<Series>& series, bool log_y, std::optional<double> vline,
                std::optional<double> hline) {
    Frame f;
    f.y0 = y0;
    f.log_y = log_y;
    bool first = true;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            const double x = s.x[i];
            const double y = s.y[i];
            if (!std::isfinite(y) || (log_y && y <= 0.0)) {
                continue;
            }
            if (first) {
                f.x_lo = f.x_hi = x;
                f.y_lo = f.y_hi = y;
                first = false;
            }
            f.x_lo = std::min(f.x_lo, x);
            f.x_hi = std::max(f.x_hi, x);
            f.y_lo = std::min(f.y_lo, y);
            f.y_hi = std::max(f.y_hi, y);
        }
    }
    if (hline) {
        f.y_lo = std::min(f.y_lo, *hline);
        f.y_hi = std::max(f.y_hi, *hline);
    }
    if (!log_y) {
        f.y_lo = std::min(f.y_lo, 0.0);
    }
    if (f.y_hi <= f.y_lo) {
        f.y_hi = log_y ? f.y_lo * 10.0 : f.y_lo + 1.0;
    }
    axes(out, f, title, "step", y_name);

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (std::isfinite(s.y[i]) && !(log_y && s.y[i] <= 0.0)) {
                pts.emplace_back(f.px(s.x[i]), f.py(s.y[i]));
            }
        }
        if (pts.size() == 1) {
            out << "<circle cx=\"" << num(pts[0].first) << "\" cy=\"" << num(pts[0].second) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        } else if (!pts.empty()) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < pts.size(); ++i) {
                out << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
            }
            out << "\"/>\n";
        }
        if (series.size() > 1) {
            const double ly = y0 + kTop + 14 + 14 * double(si);
            out << "<text x=\"" << num(kWidth - kRight - 6) << "\" y=\"" << num(ly) << "\" text-anchor=\"end\" fill=\""
                << color << "\">" << s.name << "</text>\n";
        }
    }
    if (vline) {
        const double x = f.px(*vline);
        out << "<line x1=\"" << num(x) << "\" y1=\"" << num(y0 + kTop) << "\" x2=\"" << num(x) << "\" y2=\""
            << num(y0 + kTop + f.plot_h()) << "\" stroke=\"#000\" stroke-dasharray=\"6 4\"/>\n";
    }
    if (hline) {
        const double y = f.py(*hline);
        out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y) << "\" x2=\"" << num(kLeft + f.plot_w())
            << "\" y2=\"" << num(y) << "\" stroke=\"#888\" stroke-dasharray=\"2 3\"/>\n";
    }
}

void heatmap_panel(std::ostringstream& out, double y0, const stats::DensityMovie& movie) {
    const std::size_t T = movie.histograms.size();
    const std::size_t B = movie.edges().size() - 1;
    Frame f;
    f.y0 = y0;
    f.x_lo = double(movie.steps.front());
    f.x_hi = double(movie.steps.back());
    f.y_lo = movie.edges().front();
    f.y_hi = movie.edges().back();
    axes(out, f, "weight density", "step", "value");

    const std::size_t cols = std::min(T, kMaxHeatmapColumns);
    const double cw = f.plot_w() / double(cols);
    const double ch = f.plot_h() / double(B);
    for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t t = cols == 1 ? 0 : (c * (T - 1) + (cols - 1) / 2) / (cols - 1);
        const auto& h = movie.histograms[t];
        const std::int64_t peak = *std::max_element(h.counts.begin(), h.counts.end());
        if (peak <= 0) {
            continue;
        }
        for (std::size_t b = 0; b < B; ++b) {
            if (h.counts[b] == 0) {
                continue;
            }
            const double level = double(h.counts[b]) / double(peak);
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - level)));
            out << "<rect x=\"" << num(kLeft + cw * double(c)) << "\" y=\"" << num(y0 + kTop + ch * double(B - 1 - b))
                << "\" width=\"" << num(cw) << "\" height=\"" << num(ch) << "\" fill=\"rgb(" << shade << ',' << shade
                << ",255)\"/>\n";
        }
    }
}

} // namespace

std::string render(const ReportPlots& plots) {
    std::ostringstream body;
    double y = 0.0;

    if (plots.msd != nullptr && !plots.msd->steps.empty()) {
        Series s{"MSD", {}, {}};
        for (std::size_t i = 0; i < plots.msd->steps.size(); ++i) {
            s.x.push_back(double(plots.msd->steps[i]));
            s.y.push_back(plots.msd->values[i]);
        }
        std::optional<double> peak;
        if (plots.peak_step && plots.msd->steps.size() > 1) {
            peak = double(*plots.peak_step);
        }
        line_panel(body, y, "mean square displacement", "MSD", {s}, false, peak, std::nullopt);
        y += kPanelHeight;
    }
    if (plots.density != nullptr && !plots.density->histograms.empty()) {
        heatmap_panel(body, y, *plots.density);
        y += kPanelHeight;
    }
    if (plots.rank != nullptr && !plots.rank->steps.empty()) {
        std::vector<Series> series;
        for (std::size_t j = 0; j < plots.rank->tolerances.size(); ++j) {
            Series s{"tol " + label(plots.rank->tolerances[j]), {}, {}};
            for (std::size_t t = 0; t < plots.rank->steps.size(); ++t) {
                s.x.push_back(double(plots.rank->steps[t]));
                s.y.push_back(plots.rank->ranks[t][j]);
            }
            series.push_back(std::move(s));
        }
        line_panel(body, y, "probe rank", "rank", series, false, std::nullopt, std::nullopt);
        y += kPanelHeight;
    }
    std::vector<Series> ppl_series;
    for (const auto* c : plots.perplexity) {
        if (c == nullptr || c->steps.empty()) {
            continue;
        }
        Series s{std::string(ppl::protocol_name(c->protocol)), {}, {}};
        for (std::size_t t = 0; t < c->steps.size(); ++t) {
            s.x.push_back(double(c->steps[t]));
            s.y.push_back(c->ppl_mean[t]);
        }
        ppl_series.push_back(std::move(s));
    }
    if (!ppl_series.empty()) {
        line_panel(body, y, "perplexity (linear)", "PPL", ppl_series, false, std::nullopt, std::nullopt);
        y += kPanelHeight;
        line_panel(body, y, "perplexity (log)", "PPL", ppl_series, true, std::nullopt, 1.0);
        y += kPanelHeight;
    }

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\""
        << num(std::max(y, 1.0)) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    out << body.str();
    out << "</svg>\n";
    return out.str();
}

} // namespace wdyn::svg
