#include "ventsim/datagen/plot.hpp"

#include "ventsim/datagen/io.hpp"
#include "ventsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ventsim {

namespace {

constexpr double kWidth = 960, kPanelHeight = 180, kLeft = 70, kRight = 20, kTop = 40, kGap = 30;

std::string fmt2(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

struct Marker {
    double t;
    const char* color;
    const char* dash;
};

} // namespace

std::string plot_svg(const std::vector<Sample>& samples, const std::vector<BreathLabel>& labels,
                     std::size_t first, std::size_t last, const std::string& title)
{
    std::vector<const BreathLabel*> sel;
    for (const auto& l : labels) {
        if (l.breath_idx >= first && l.breath_idx <= last) sel.push_back(&l);
    }
    if (first > last || sel.empty() || samples.empty()) {
        throw ValidationError("no labeled breaths in range [" + std::to_string(first) + ", " +
                              std::to_string(last) + "]");
    }
    double t0 = INFINITY, t1 = -INFINITY;
    std::vector<Marker> markers;
    for (const auto* l : sel) {
        t0 = std::min(t0, l->t_insp_start);
        t1 = std::max(t1, l->t_insp_end);
        markers.push_back({l->t_insp_start, "#2a9d3f", "6,4"});
        markers.push_back({l->t_insp_end, "#c0392b", "6,4"});
        if (l->t_trigger) {
            t0 = std::min(t0, *l->t_trigger);
            markers.push_back({*l->t_trigger, "#1f5fbf", "none"});
        }
        if (l->t_cycle) {
            t1 = std::max(t1, *l->t_cycle);
            markers.push_back({*l->t_cycle, "#e67e22", "none"});
        }
    }
    t0 = std::max(t0 - 0.5, samples.front().t);
    t1 = std::min(t1 + 1.0, samples.back().t);

    std::vector<const Sample*> win;
    for (const auto& s : samples) {
        if (s.t >= t0 && s.t <= t1) win.push_back(&s);
    }

    struct Channel {
        const char* name;
        double Sample::*field;
        const char* color;
    };
    const Channel channels[] = {{"Paw [cmH2O]", &Sample::paw, "#222222"},
                                {"Flow [L/s]", &Sample::flow, "#222222"},
                                {"Volume [L]", &Sample::vol, "#222222"}};
    const double plot_w = kWidth - kLeft - kRight;
    const double height = kTop + 3 * kPanelHeight + 2 * kGap + 60;
    auto x_of = [&](double t) { return kLeft + (t - t0) / (t1 - t0) * plot_w; };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt2(kWidth) +
                      "\" height=\"" + fmt2(height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt2(kLeft) + "\" y=\"22\" font-size=\"15\">" + escape(title) + "</text>\n";

    for (int c = 0; c < 3; ++c) {
        const double top = kTop + c * (kPanelHeight + kGap);
        double lo = INFINITY, hi = -INFINITY;
        for (const auto* s : win) {
            lo = std::min(lo, s->*channels[c].field);
            hi = std::max(hi, s->*channels[c].field);
        }
        if (!(hi > lo)) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
        auto y_of = [&](double v) { return top + (hi - v) / (hi - lo) * kPanelHeight; };

        svg += "<g>\n<rect x=\"" + fmt2(kLeft) + "\" y=\"" + fmt2(top) + "\" width=\"" + fmt2(plot_w) +
               "\" height=\"" + fmt2(kPanelHeight) + "\" fill=\"none\" stroke=\"#888888\"/>\n";
        svg += "<text x=\"10\" y=\"" + fmt2(top + kPanelHeight / 2) + "\">" + channels[c].name + "</text>\n";
        svg += "<text x=\"" + fmt2(kLeft - 4) + "\" y=\"" + fmt2(top + 10) + "\" text-anchor=\"end\">" +
               format_number(hi) + "</text>\n";
        svg += "<text x=\"" + fmt2(kLeft - 4) + "\" y=\"" + fmt2(top + kPanelHeight) +
               "\" text-anchor=\"end\">" + format_number(lo) + "</text>\n";
        if (lo < 0 && hi > 0) {
            svg += "<line x1=\"" + fmt2(kLeft) + "\" x2=\"" + fmt2(kLeft + plot_w) + "\" y1=\"" +
                   fmt2(y_of(0)) + "\" y2=\"" + fmt2(y_of(0)) + "\" stroke=\"#cccccc\"/>\n";
        }
        for (const auto& m : markers) {
            if (m.t < t0 || m.t > t1) continue;
            svg += "<line x1=\"" + fmt2(x_of(m.t)) + "\" x2=\"" + fmt2(x_of(m.t)) + "\" y1=\"" +
                   fmt2(top) + "\" y2=\"" + fmt2(top + kPanelHeight) + "\" stroke=\"" + m.color +
                   "\" stroke-dasharray=\"" + m.dash + "\"/>\n";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(channels[c].color) +
               "\" stroke-width=\"1.2\" points=\"";
        for (const auto* s : win) svg += fmt2(x_of(s->t)) + "," + fmt2(y_of(s->*channels[c].field)) + " ";
        svg += "\"/>\n</g>\n";
    }

    const double axis_y = kTop + 3 * kPanelHeight + 2 * kGap + 16;
    const double step = (t1 - t0) > 12 ? 2.0 : 1.0;
    for (double t = std::ceil(t0 / step) * step; t <= t1; t += step) {
        svg += "<text x=\"" + fmt2(x_of(t)) + "\" y=\"" + fmt2(axis_y) + "\" text-anchor=\"middle\">" +
               format_number(t) + "</text>\n";
    }
    svg += "<text x=\"" + fmt2(kLeft + plot_w / 2) + "\" y=\"" + fmt2(axis_y + 18) +
           "\" text-anchor=\"middle\">t [s]</text>\n";

    const std::pair<const char*, const char*> legend[] = {{"effort start", "#2a9d3f"},
                                                          {"effort end", "#c0392b"},
                                                          {"trigger", "#1f5fbf"},
                                                          {"cycle", "#e67e22"}};
    double lx = kWidth - kRight - 4 * 110;
    for (const auto& [name, color] : legend) {
        svg += "<line x1=\"" + fmt2(lx) + "\" x2=\"" + fmt2(lx + 20) + "\" y1=\"18\" y2=\"18\" stroke=\"" +
               color + "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + fmt2(lx + 24) + "\" y=\"22\">" + name + "</text>\n";
        lx += 110;
    }
    svg += "</svg>\n";
    return svg;
}

void plot_record(const std::filesystem::path& record_dir, std::size_t first, std::size_t last,
                 const std::filesystem::path& out_svg)
{
    const auto samples = parse_waveform(read_table(record_dir / "waveform.csv"));
    const auto labels = parse_labels(read_table(record_dir / "labels.csv"));
    const std::string title = record_dir.filename().string() + " breaths " + std::to_string(first) +
                              "-" + std::to_string(last);
    write_file_atomic(out_svg, plot_svg(samples, labels, first, last, title));
}

} // namespace ventsim
