#include "vsrfdx/plot.hpp"

#include "vsrfdx/config.hpp"
#include "vsrfdx/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>

namespace vsrfdx::plot {

namespace {

constexpr double kWidth = 900.0;
constexpr double kPanelHeight = 220.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 40.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = 0;
            hi = 1;
        } else if (hi == lo) {
            lo -= 1;
            hi += 1;
        } else {
            double m = 0.05 * (hi - lo);
            lo -= m;
            hi += m;
        }
    }
};

} // namespace

void write_svg(std::ostream& out, const std::vector<Panel>& panels, const std::string& x_label) {
    Range xr;
    for (const auto& p : panels) {
        for (const auto& s : p.series) {
            for (double x : s.x) xr.add(x);
        }
    }
    if (!std::isfinite(xr.lo)) xr = {0.0, 1.0};
    if (xr.hi == xr.lo) xr.hi = xr.lo + 1.0;

    const double plot_w = kWidth - kLeft - kRight;
    const double height = panels.size() * (kPanelHeight + kTop + kBottom);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const auto& p = panels[pi];
        const double y0 = pi * (kPanelHeight + kTop + kBottom) + kTop;
        Range yr;
        for (const auto& s : p.series) {
            for (double y : s.y) yr.add(y);
        }
        yr.pad();
        auto sx = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
        auto sy = [&](double y) { return y0 + kPanelHeight - (y - yr.lo) / (yr.hi - yr.lo) * kPanelHeight; };

        out << "<text x=\"" << kLeft << "\" y=\"" << y0 - 8 << "\" font-size=\"13\">" << escape(p.title)
            << "</text>\n";
        out << "<rect x=\"" << kLeft << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\""
            << kPanelHeight << "\" fill=\"none\" stroke=\"#444\"/>\n";
        for (int t = 0; t <= 4; ++t) {
            double yv = yr.lo + (yr.hi - yr.lo) * t / 4.0;
            double xv = xr.lo + (xr.hi - xr.lo) * t / 4.0;
            out << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << sy(yv)
                << "\" y2=\"" << sy(yv) << "\" stroke=\"#ddd\"/>\n";
            out << "<text x=\"" << kLeft - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">"
                << num(yv) << "</text>\n";
            out << "<text x=\"" << sx(xv) << "\" y=\"" << y0 + kPanelHeight + 15
                << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
        }
        out << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << y0 + kPanelHeight + 30
            << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
        out << "<text transform=\"translate(14," << y0 + kPanelHeight / 2
            << ") rotate(-90)\" text-anchor=\"middle\">" << escape(p.y_label) << "</text>\n";

        for (std::size_t si = 0; si < p.series.size(); ++si) {
            const auto& s = p.series[si];
            std::string color = s.color.empty() ? kPalette[si % std::size(kPalette)] : s.color;
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (p.steps && i > 0) out << num(sx(s.x[i])) << ',' << num(sy(s.y[i - 1])) << ' ';
                out << num(sx(s.x[i])) << ',' << num(sy(s.y[i])) << ' ';
            }
            out << "\"/>\n";
            double ly = y0 + 12 + 14 * static_cast<double>(si);
            out << "<line x1=\"" << kLeft + plot_w + 10 << "\" x2=\"" << kLeft + plot_w + 30 << "\" y1=\""
                << ly - 4 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
            out << "<text x=\"" << kLeft + plot_w + 35 << "\" y=\"" << ly << "\">" << escape(s.name)
                << "</text>\n";
        }
    }
    out << "</svg>\n";
}

std::vector<Panel> trace_panels(const sim::Trace& trace) {
    Panel cur{"Phase currents", "A", {{"ia", "", {}, {}}, {"ib", "", {}, {}}, {"ic", "", {}, {}}}, false};
    Panel vdc{"DC-link voltage", "V", {{"udc", "", {}, {}}}, false};
    Panel gates{"Blocked switches", "count", {{"blocked", "", {}, {}}}, true};
    // Gate permissions toggle every carrier period; blocked = lower and upper both off.
    for (const auto& r : trace.records) {
        for (int k = 0; k < 3; ++k) {
            cur.series[k].x.push_back(r.t);
            cur.series[k].y.push_back(r.i_abc[k]);
        }
        vdc.series[0].x.push_back(r.t);
        vdc.series[0].y.push_back(r.u_dc);
        int blocked = 0;
        for (int k = 0; k < 3; ++k) {
            if (!r.gates.contains(upper_switch(k)) && !r.gates.contains(lower_switch(k))) ++blocked;
        }
        gates.series[0].x.push_back(r.t);
        gates.series[0].y.push_back(blocked);
    }
    return {cur, vdc, gates};
}

std::vector<Panel> diagnosis_panels(std::istream& log) {
    Panel counts{"Diagnosis results per window", "count", {}, true};
    for (int c = 0; c < 9; ++c) {
        counts.series.push_back({c < 8 ? "F" + std::to_string(c) : std::string("Error"), "", {}, {}});
    }
    Panel located{"Switches in window report", "count", {{"switches", "", {}, {}}}, true};
    std::string line;
    std::size_t row = 0;
    while (std::getline(log, line)) {
        ++row;
        if (line.empty() || line[0] == '#' || line.rfind("window_index", 0) == 0) continue;
        auto f = split(line, ',');
        if (f.size() != 12) {
            throw Error(ErrorKind::MalformedFile, "diagnosis log row " + std::to_string(row) + ": expected 12 fields");
        }
        double t = 0;
        try {
            t = parse_double(f[1], "t_start");
            for (int c = 0; c < 9; ++c) {
                counts.series[c].x.push_back(t);
                counts.series[c].y.push_back(parse_double(f[2 + c], "count"));
            }
            located.series[0].x.push_back(t);
            located.series[0].y.push_back(SwitchSet::parse(f[11]).size());
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Config) throw;
            throw Error(ErrorKind::MalformedFile, e.what());
        }
    }
    return {counts, located};
}

} // namespace vsrfdx::plot
