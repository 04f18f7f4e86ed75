#pragma once

// Minimal SVG line charts for traces and diagnosis logs.

#include "vsrfdx/sim.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace vsrfdx::plot {

struct Series {
    std::string name;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
};

struct Panel {
    std::string title;
    std::string y_label;
    std::vector<Series> series;
    bool steps = false;  // draw as a staircase
};

// Panels stacked vertically, sharing the x axis.
void write_svg(std::ostream& out, const std::vector<Panel>& panels, const std::string& x_label);

// Phase currents, DC-link voltage and faulted-gate count versus time.
std::vector<Panel> trace_panels(const sim::Trace& trace);

// Per-label counts versus window start time, read from a diagnosis log CSV.
std::vector<Panel> diagnosis_panels(std::istream& log);

} // namespace vsrfdx::plot
