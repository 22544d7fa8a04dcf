#include "ventsim/datagen/io.hpp"

#include "ventsim/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ventsim {

namespace fs = std::filesystem;

std::string format_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_file_atomic(const fs::path& path, std::string_view content)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t Table::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw ValidationError("table has no column '" + std::string(name) + "'");
}

bool Table::has_column(std::string_view name) const
{
    for (const auto& h : header) {
        if (h == name) return true;
    }
    return false;
}

Table parse_table(std::string_view text)
{
    auto split = [](std::string_view line) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            out.emplace_back(line.substr(start, comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return out;
    };
    Table t;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = nl + 1;
        if (line.empty()) continue;
        if (first) {
            t.header = split(line);
            first = false;
            continue;
        }
        auto row = split(line);
        if (row.size() != t.header.size()) {
            throw ValidationError("table row has " + std::to_string(row.size()) + " fields, header has " +
                                  std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(row));
    }
    if (first) throw ValidationError("table is empty");
    return t;
}

Table read_table(const fs::path& path)
{
    try {
        return parse_table(read_file(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

namespace {

double to_double(const std::string& s)
{
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw ValidationError("not a number: '" + s + "'");
    }
    return v;
}

std::optional<double> to_optional(const std::string& s)
{
    if (s.empty()) return std::nullopt;
    return to_double(s);
}

std::string opt(const std::optional<double>& v)
{
    return v ? format_number(*v) : std::string();
}

AsynchronyClass to_class(const std::string& s)
{
    const auto c = parse_asynchrony_class(s);
    if (!c) throw ValidationError("unknown class '" + s + "'");
    return *c;
}

} // namespace

std::string waveform_csv(const std::vector<Sample>& samples)
{
    std::string out = "t,paw,flow,vol,pmus,vent_phase\n";
    out.reserve(samples.size() * 48);
    for (const auto& s : samples) {
        out += format_number(s.t);
        out += ',';
        out += format_number(s.paw);
        out += ',';
        out += format_number(s.flow);
        out += ',';
        out += format_number(s.vol);
        out += ',';
        out += format_number(s.pmus);
        out += s.phase == Phase::Inspiration ? ",1\n" : ",0\n";
    }
    return out;
}

std::vector<Sample> parse_waveform(const Table& t)
{
    const std::size_t ct = t.column("t"), cp = t.column("paw"), cf = t.column("flow"),
                      cv = t.column("vol"), cm = t.column("pmus"), cph = t.column("vent_phase");
    std::vector<Sample> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        Sample s;
        s.t = to_double(r[ct]);
        s.paw = to_double(r[cp]);
        s.flow = to_double(r[cf]);
        s.vol = to_double(r[cv]);
        s.pmus = to_double(r[cm]);
        s.phase = r[cph] == "1" ? Phase::Inspiration : Phase::Expiration;
        out.push_back(s);
    }
    return out;
}

std::string labels_csv(const std::vector<BreathLabel>& labels)
{
    std::string out =
        "breath_idx,t_insp_start,t_insp_end,t_trigger,t_cycle,start_delay_ms,end_delay_ms,class,intent\n";
    for (const auto& l : labels) {
        out += std::to_string(l.breath_idx) + ',' + format_number(l.t_insp_start) + ',' +
               format_number(l.t_insp_end) + ',' + opt(l.t_trigger) + ',' + opt(l.t_cycle) + ',' +
               opt(l.start_delay_ms) + ',' + opt(l.end_delay_ms) + ',' + std::string(to_string(l.cls)) +
               ',' + (l.intent ? std::string(to_string(*l.intent)) : std::string()) + '\n';
    }
    return out;
}

std::vector<BreathLabel> parse_labels(const Table& t)
{
    const std::size_t ci = t.column("breath_idx"), cs = t.column("t_insp_start"),
                      ce = t.column("t_insp_end"), ctr = t.column("t_trigger"),
                      ccy = t.column("t_cycle"), csd = t.column("start_delay_ms"),
                      ced = t.column("end_delay_ms"), ccl = t.column("class"),
                      cin = t.column("intent");
    std::vector<BreathLabel> out;
    for (const auto& r : t.rows) {
        BreathLabel l;
        l.breath_idx = static_cast<std::size_t>(to_double(r[ci]));
        l.t_insp_start = to_double(r[cs]);
        l.t_insp_end = to_double(r[ce]);
        l.t_trigger = to_optional(r[ctr]);
        l.t_cycle = to_optional(r[ccy]);
        l.start_delay_ms = to_optional(r[csd]);
        l.end_delay_ms = to_optional(r[ced]);
        l.cls = to_class(r[ccl]);
        if (!r[cin].empty()) l.intent = to_class(r[cin]);
        out.push_back(l);
    }
    return out;
}

} // namespace ventsim
