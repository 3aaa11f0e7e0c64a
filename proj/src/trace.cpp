#include "hume/trace.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hume::envsim {

namespace {

// %.9g round-trips any f32 exactly through strtof.
void append_f32(std::string& s, float v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    s += buf;
}

void append_f64(std::string& s, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    s += buf;
}

}  // namespace

std::string format_trace(const Trace& trace) {
    std::string out;
    for (const auto& L : trace.lines) {
        out += L.kind;
        out += ' ';
        out += std::to_string(L.idx);
        out += ' ';
        out += std::to_string(L.t);
        out += ' ';
        append_f32(out, L.x);
        out += ' ';
        append_f32(out, L.y);
        if (L.theta) {
            out += ' ';
            append_f32(out, *L.theta);
        }
        out += '\n';
    }
    for (const auto& P : trace.plans) {
        out += "plan ";
        out += std::to_string(P.seq);
        out += ' ';
        append_f64(out, P.t_pub);
        out += ' ';
        out += std::to_string(P.selected);
        for (float q : P.q) {
            out += ' ';
            append_f32(out, q);
        }
        out += '\n';
    }
    return out;
}

void render_trace(const Trace& trace, const std::string& path) {
    if (trace.empty()) throw ConfigError("refusing to render an empty trace");
    std::ofstream f(path);
    if (!f) throw MissingArtifactError("cannot open trace for writing: " + path);
    f << format_trace(trace);
    if (!f) throw MissingArtifactError("trace write failed: " + path);
}

Trace parse_trace_text(const std::string& text) {
    Trace trace;
    std::istringstream in(text);
    std::string line;
    std::uint64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "plan") {
            TracePlan p;
            ls >> p.seq >> p.t_pub >> p.selected;
            if (!ls) throw FormatError("malformed plan record at line " + std::to_string(lineno), lineno);
            float q;
            while (ls >> q) p.q.push_back(q);
            trace.plans.push_back(std::move(p));
            continue;
        }
        TraceLine l;
        l.kind = kind;
        float theta;
        ls >> l.idx >> l.t >> l.x >> l.y;
        if (!ls) throw FormatError("malformed trace record at line " + std::to_string(lineno), lineno);
        if (ls >> theta) l.theta = theta;
        trace.lines.push_back(std::move(l));
    }
    return trace;
}

Trace parse_trace(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifactError("cannot open trace: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_trace_text(ss.str());
}

}  // namespace hume::envsim
