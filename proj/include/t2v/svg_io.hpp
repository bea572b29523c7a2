#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "t2v/geometry.hpp"
#include "t2v/util.hpp"

namespace t2v::svg {

using geom::Affine2x3;
using geom::BezierPath;
using geom::Vec2;

struct SvgEntry {
    BezierPath path;  // canvas units
    std::array<float, 4> rgba = {0, 0, 0, 1};
    float opacity = 1.0f;
};

struct SvgDocument {
    double width = 0;
    double height = 0;
    std::vector<SvgEntry> entries;  // z-order, first = bottom layer
    std::vector<std::string> warnings;
};

// scale a canvas-units path into the unit square
inline BezierPath to_unit_canvas(const BezierPath& path, double width, double height) {
    BezierPath out = path;
    for (Vec2& p : out.points) {
        p.x /= width;
        p.y /= height;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parsing internals
// ---------------------------------------------------------------------------
namespace detail {

inline bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

struct Attr {
    std::string name;
    std::string value;
};

struct Tag {
    std::string name;
    std::vector<Attr> attrs;
    bool self_closing = false;
    bool closing = false;

    const std::string* find(const std::string& key) const {
        for (const Attr& a : attrs)
            if (a.name == key) return &a.value;
        return nullptr;
    }
};

inline std::string decode_entities(std::string_view v) {
    std::string out;
    out.reserve(v.size());
    for (size_t i = 0; i < v.size();) {
        if (v[i] == '&') {
            auto match = [&](std::string_view ent, char repl) {
                if (v.substr(i, ent.size()) == ent) {
                    out.push_back(repl);
                    i += ent.size();
                    return true;
                }
                return false;
            };
            if (match("&amp;", '&') || match("&lt;", '<') || match("&gt;", '>') ||
                match("&quot;", '"') || match("&apos;", '\''))
                continue;
        }
        out.push_back(v[i++]);
    }
    return out;
}

// Minimal XML tag scanner: yields open/close/self-closing tags, skips
// comments, declarations, CDATA, and text content.
class XmlScanner {
public:
    explicit XmlScanner(std::string_view text) : text_(text) {}

    std::optional<Tag> next() {
        while (pos_ < text_.size()) {
            size_t lt = text_.find('<', pos_);
            if (lt == std::string_view::npos) return std::nullopt;
            pos_ = lt + 1;
            if (starts_with("!--")) {
                size_t end = text_.find("-->", pos_);
                if (end == std::string_view::npos) throw ParseError("unterminated comment");
                pos_ = end + 3;
                continue;
            }
            if (starts_with("![CDATA[")) {
                size_t end = text_.find("]]>", pos_);
                if (end == std::string_view::npos) throw ParseError("unterminated CDATA");
                pos_ = end + 3;
                continue;
            }
            if (pos_ < text_.size() && (text_[pos_] == '?' || text_[pos_] == '!')) {
                size_t end = text_.find('>', pos_);
                if (end == std::string_view::npos) throw ParseError("unterminated declaration");
                pos_ = end + 1;
                continue;
            }
            return parse_tag();
        }
        return std::nullopt;
    }

private:
    bool starts_with(std::string_view s) const { return text_.substr(pos_, s.size()) == s; }

    Tag parse_tag() {
        Tag tag;
        if (pos_ < text_.size() && text_[pos_] == '/') {
            tag.closing = true;
            ++pos_;
        }
        size_t start = pos_;
        while (pos_ < text_.size() && !is_ws(text_[pos_]) && text_[pos_] != '>' && text_[pos_] != '/')
            ++pos_;
        if (pos_ == start) throw ParseError("empty tag name");
        tag.name = std::string(text_.substr(start, pos_ - start));
        // strip namespace prefix
        if (size_t colon = tag.name.find(':'); colon != std::string::npos)
            tag.name = tag.name.substr(colon + 1);

        while (true) {
            while (pos_ < text_.size() && is_ws(text_[pos_])) ++pos_;
            if (pos_ >= text_.size()) throw ParseError("unterminated tag");
            if (text_[pos_] == '>') {
                ++pos_;
                return tag;
            }
            if (text_[pos_] == '/') {
                ++pos_;
                if (pos_ >= text_.size() || text_[pos_] != '>') throw ParseError("malformed tag end");
                ++pos_;
                tag.self_closing = true;
                return tag;
            }
            // attribute
            size_t astart = pos_;
            while (pos_ < text_.size() && text_[pos_] != '=' && !is_ws(text_[pos_]) &&
                   text_[pos_] != '>' && text_[pos_] != '/')
                ++pos_;
            std::string name(text_.substr(astart, pos_ - astart));
            while (pos_ < text_.size() && is_ws(text_[pos_])) ++pos_;
            if (pos_ >= text_.size() || text_[pos_] != '=') {
                // attribute without value; ignore
                continue;
            }
            ++pos_;
            while (pos_ < text_.size() && is_ws(text_[pos_])) ++pos_;
            if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
                throw ParseError("attribute value must be quoted: " + name);
            char quote = text_[pos_++];
            size_t vstart = pos_;
            size_t vend = text_.find(quote, vstart);
            if (vend == std::string_view::npos) throw ParseError("unterminated attribute value");
            pos_ = vend + 1;
            tag.attrs.push_back({name, decode_entities(text_.substr(vstart, vend - vstart))});
        }
    }

    std::string_view text_;
    size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Numbers, colors, transform lists
// ---------------------------------------------------------------------------
class NumberCursor {
public:
    explicit NumberCursor(std::string_view s) : s_(s) {}

    void skip_separators() {
        while (pos_ < s_.size() && (is_ws(s_[pos_]) || s_[pos_] == ',')) ++pos_;
    }

    bool done() {
        skip_separators();
        return pos_ >= s_.size();
    }

    char peek_command() {
        skip_separators();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    char take_command() {
        skip_separators();
        return s_[pos_++];
    }

    double number() {
        skip_separators();
        const char* begin = s_.data() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) throw ParseError("expected number in path data");
        pos_ += static_cast<size_t>(end - begin);
        return v;
    }

    // arc flags may be unseparated single digits
    int flag() {
        skip_separators();
        if (pos_ >= s_.size() || (s_[pos_] != '0' && s_[pos_] != '1'))
            throw ParseError("expected arc flag");
        return s_[pos_++] == '1' ? 1 : 0;
    }

private:
    std::string_view s_;
    size_t pos_ = 0;
};

inline std::optional<std::array<float, 3>> named_color(const std::string& name) {
    static const std::map<std::string, std::array<float, 3>> table = {
        {"black", {0, 0, 0}},       {"white", {1, 1, 1}},
        {"red", {1, 0, 0}},         {"green", {0, 0.50196f, 0}},
        {"lime", {0, 1, 0}},        {"blue", {0, 0, 1}},
        {"yellow", {1, 1, 0}},      {"cyan", {0, 1, 1}},
        {"magenta", {1, 0, 1}},     {"gray", {0.50196f, 0.50196f, 0.50196f}},
        {"grey", {0.50196f, 0.50196f, 0.50196f}},
        {"orange", {1, 0.64706f, 0}},
        {"purple", {0.50196f, 0, 0.50196f}},
        {"brown", {0.64706f, 0.16471f, 0.16471f}},
        {"pink", {1, 0.75294f, 0.79608f}},
        {"silver", {0.75294f, 0.75294f, 0.75294f}},
        {"maroon", {0.50196f, 0, 0}},
        {"navy", {0, 0, 0.50196f}},
        {"teal", {0, 0.50196f, 0.50196f}},
        {"olive", {0.50196f, 0.50196f, 0}},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

// returns false for unsupported paint (gradients, patterns)
inline bool parse_paint(const std::string& value, std::array<float, 3>& rgb, bool& none) {
    std::string v;
    for (char c : value)
        if (!is_ws(c)) v.push_back(static_cast<char>(std::tolower(c)));
    none = false;
    if (v == "none" || v == "transparent") {
        none = true;
        return true;
    }
    if (v.rfind("url(", 0) == 0) return false;
    if (!v.empty() && v[0] == '#') {
        std::string hex = v.substr(1);
        auto nybble = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            return -1;
        };
        if (hex.size() == 3) {
            for (int i = 0; i < 3; ++i) {
                int d = nybble(hex[i]);
                if (d < 0) throw ParseError("bad hex color: " + value);
                rgb[i] = static_cast<float>(d * 17) / 255.0f;
            }
            return true;
        }
        if (hex.size() == 6) {
            for (int i = 0; i < 3; ++i) {
                int hi = nybble(hex[2 * i]), lo = nybble(hex[2 * i + 1]);
                if (hi < 0 || lo < 0) throw ParseError("bad hex color: " + value);
                rgb[i] = static_cast<float>(hi * 16 + lo) / 255.0f;
            }
            return true;
        }
        throw ParseError("bad hex color: " + value);
    }
    if (v.rfind("rgb(", 0) == 0 && v.back() == ')') {
        NumberCursor nc(std::string_view(v).substr(4, v.size() - 5));
        for (int i = 0; i < 3; ++i) {
            double x = nc.number();
            if (!nc.done() && v.find('%') != std::string::npos) x = x * 255.0 / 100.0;
            rgb[i] = static_cast<float>(std::clamp(x / 255.0, 0.0, 1.0));
        }
        return true;
    }
    if (auto named = named_color(v)) {
        rgb = *named;
        return true;
    }
    return false;
}

inline Affine2x3 parse_transform_list(const std::string& text) {
    Affine2x3 acc = Affine2x3::identity();
    size_t pos = 0;
    while (pos < text.size()) {
        while (pos < text.size() && (is_ws(text[pos]) || text[pos] == ',')) ++pos;
        if (pos >= text.size()) break;
        size_t name_start = pos;
        while (pos < text.size() && (std::isalpha(static_cast<unsigned char>(text[pos])))) ++pos;
        std::string name = text.substr(name_start, pos - name_start);
        while (pos < text.size() && is_ws(text[pos])) ++pos;
        if (pos >= text.size() || text[pos] != '(') throw ParseError("bad transform: " + text);
        size_t close = text.find(')', pos);
        if (close == std::string::npos) throw ParseError("unterminated transform: " + text);
        NumberCursor nc(std::string_view(text).substr(pos + 1, close - pos - 1));
        pos = close + 1;

        std::vector<double> args;
        while (!nc.done()) args.push_back(nc.number());
        Affine2x3 m;
        const double deg = std::numbers::pi / 180.0;
        if (name == "translate") {
            if (args.empty() || args.size() > 2) throw ParseError("translate arity");
            m = Affine2x3::translation(args[0], args.size() > 1 ? args[1] : 0.0);
        } else if (name == "scale") {
            if (args.empty() || args.size() > 2) throw ParseError("scale arity");
            m = Affine2x3::scaling(args[0], args.size() > 1 ? args[1] : args[0]);
        } else if (name == "rotate") {
            if (args.size() == 1) {
                m = Affine2x3::rotation(args[0] * deg);
            } else if (args.size() == 3) {
                m = Affine2x3::translation(-args[1], -args[2])
                        .then(Affine2x3::rotation(args[0] * deg))
                        .then(Affine2x3::translation(args[1], args[2]));
            } else {
                throw ParseError("rotate arity");
            }
        } else if (name == "matrix") {
            if (args.size() != 6) throw ParseError("matrix arity");
            m = {args[0], args[2], args[1], args[3], args[4], args[5]};
        } else if (name == "skewX") {
            if (args.size() != 1) throw ParseError("skewX arity");
            m = {1, std::tan(args[0] * deg), 0, 1, 0, 0};
        } else if (name == "skewY") {
            if (args.size() != 1) throw ParseError("skewY arity");
            m = {1, 0, std::tan(args[0] * deg), 1, 0, 0};
        } else {
            throw ParseError("unknown transform op: " + name);
        }
        // ops apply left to right: acc = acc ∘ m
        acc = m.then(acc);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Path construction: everything becomes end-to-end cubics.
// ---------------------------------------------------------------------------
class PathBuilder {
public:
    void move_to(Vec2 p) {
        flush();
        current_ = start_ = p;
        pts_ = {p};
    }

    void cubic_to(Vec2 c1, Vec2 c2, Vec2 p) {
        if (pts_.empty()) move_to(current_);
        pts_.push_back(c1);
        pts_.push_back(c2);
        pts_.push_back(p);
        current_ = p;
        last_cubic_ctrl_ = c2;
        has_last_cubic_ = true;
        has_last_quad_ = false;
    }

    void line_to(Vec2 p) {
        cubic_to(current_ + (p - current_) * (1.0 / 3.0), current_ + (p - current_) * (2.0 / 3.0), p);
        has_last_cubic_ = false;
    }

    void quad_to(Vec2 q, Vec2 p) {
        Vec2 a = current_;
        cubic_to(a + (q - a) * (2.0 / 3.0), p + (q - p) * (2.0 / 3.0), p);
        has_last_cubic_ = false;
        has_last_quad_ = true;
        last_quad_ctrl_ = q;
    }

    void smooth_cubic_to(Vec2 c2, Vec2 p) {
        Vec2 c1 = has_last_cubic_ ? current_ + (current_ - last_cubic_ctrl_) : current_;
        cubic_to(c1, c2, p);
    }

    void smooth_quad_to(Vec2 p) {
        Vec2 q = has_last_quad_ ? current_ + (current_ - last_quad_ctrl_) : current_;
        quad_to(q, p);
    }

    // SVG endpoint-parametrized elliptical arc, split into <= 90 deg cubics
    void arc_to(double rx, double ry, double rot_deg, int large_arc, int sweep, Vec2 p) {
        Vec2 a = current_;
        if ((a - p).norm() < 1e-12) return;
        rx = std::fabs(rx);
        ry = std::fabs(ry);
        if (rx < 1e-12 || ry < 1e-12) {
            line_to(p);
            return;
        }
        double phi = rot_deg * std::numbers::pi / 180.0;
        double cphi = std::cos(phi), sphi = std::sin(phi);
        double dx2 = (a.x - p.x) / 2.0, dy2 = (a.y - p.y) / 2.0;
        double x1p = cphi * dx2 + sphi * dy2;
        double y1p = -sphi * dx2 + cphi * dy2;
        double lam = (x1p * x1p) / (rx * rx) + (y1p * y1p) / (ry * ry);
        if (lam > 1.0) {
            double s = std::sqrt(lam);
            rx *= s;
            ry *= s;
        }
        double num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p;
        double den = rx * rx * y1p * y1p + ry * ry * x1p * x1p;
        double radicand = std::max(0.0, num / den);
        double coef = std::sqrt(radicand);
        if (large_arc == sweep) coef = -coef;
        double cxp = coef * rx * y1p / ry;
        double cyp = -coef * ry * x1p / rx;
        double cx = cphi * cxp - sphi * cyp + (a.x + p.x) / 2.0;
        double cy = sphi * cxp + cphi * cyp + (a.y + p.y) / 2.0;

        auto angle = [](double ux, double uy, double vx, double vy) {
            double dot = ux * vx + uy * vy;
            double len = std::sqrt((ux * ux + uy * uy) * (vx * vx + vy * vy));
            double ang = std::acos(std::clamp(dot / len, -1.0, 1.0));
            if (ux * vy - uy * vx < 0) ang = -ang;
            return ang;
        };
        double theta1 = angle(1, 0, (x1p - cxp) / rx, (y1p - cyp) / ry);
        double dtheta = angle((x1p - cxp) / rx, (y1p - cyp) / ry, (-x1p - cxp) / rx, (-y1p - cyp) / ry);
        if (!sweep && dtheta > 0) dtheta -= 2 * std::numbers::pi;
        if (sweep && dtheta < 0) dtheta += 2 * std::numbers::pi;

        int n = std::max(1, static_cast<int>(std::ceil(std::fabs(dtheta) / (std::numbers::pi / 2.0))));
        double delta = dtheta / n;
        double k = 4.0 / 3.0 * std::tan(delta / 4.0);
        for (int i = 0; i < n; ++i) {
            double t1 = theta1 + i * delta;
            double t2 = t1 + delta;
            auto pt = [&](double th) -> Vec2 {
                double ex = rx * std::cos(th), ey = ry * std::sin(th);
                return {cx + cphi * ex - sphi * ey, cy + sphi * ex + cphi * ey};
            };
            auto dpt = [&](double th) -> Vec2 {
                double ex = -rx * std::sin(th), ey = ry * std::cos(th);
                return {cphi * ex - sphi * ey, sphi * ex + cphi * ey};
            };
            Vec2 s = pt(t1), e = pt(t2);
            Vec2 c1 = s + dpt(t1) * k;
            Vec2 c2 = e - dpt(t2) * k;
            cubic_to(c1, c2, e);
        }
        has_last_cubic_ = false;
    }

    void close() {
        if (pts_.size() < 4) {
            // nothing drawable in this subpath
            pts_.clear();
            return;
        }
        if ((current_ - start_).norm() > 1e-9) line_to(start_);
        pts_.pop_back();  // final endpoint wraps to the start
        BezierPath path;
        path.points = std::move(pts_);
        path.closed = true;
        out_.push_back(std::move(path));
        pts_.clear();
        current_ = start_;
    }

    void flush() {
        if (pts_.size() >= 4) {
            BezierPath path;
            path.points = std::move(pts_);
            path.closed = false;
            out_.push_back(std::move(path));
        }
        pts_.clear();
    }

    std::vector<BezierPath> take() {
        flush();
        return std::move(out_);
    }

    Vec2 current() const { return current_; }

private:
    std::vector<Vec2> pts_;
    std::vector<BezierPath> out_;
    Vec2 current_{0, 0};
    Vec2 start_{0, 0};
    Vec2 last_cubic_ctrl_{0, 0};
    Vec2 last_quad_ctrl_{0, 0};
    bool has_last_cubic_ = false;
    bool has_last_quad_ = false;
};

inline std::vector<BezierPath> parse_path_data(const std::string& d) {
    PathBuilder builder;
    NumberCursor nc(d);
    char cmd = '\0';
    Vec2 cur{0, 0};
    auto rel = [&](double x, double y) { return Vec2{cur.x + x, cur.y + y}; };
    while (!nc.done()) {
        char c = nc.peek_command();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cmd = nc.take_command();
        } else if (cmd == '\0') {
            throw ParseError("path data must start with a command");
        } else if (cmd == 'M') {
            cmd = 'L';  // implicit lineto after moveto
        } else if (cmd == 'm') {
            cmd = 'l';
        }
        switch (cmd) {
            case 'M': {
                Vec2 p{nc.number(), nc.number()};
                builder.move_to(p);
                cur = p;
                break;
            }
            case 'm': {
                Vec2 p = rel(nc.number(), nc.number());
                builder.move_to(p);
                cur = p;
                break;
            }
            case 'L': {
                Vec2 p{nc.number(), nc.number()};
                builder.line_to(p);
                cur = p;
                break;
            }
            case 'l': {
                Vec2 p = rel(nc.number(), nc.number());
                builder.line_to(p);
                cur = p;
                break;
            }
            case 'H': {
                Vec2 p{nc.number(), cur.y};
                builder.line_to(p);
                cur = p;
                break;
            }
            case 'h': {
                Vec2 p{cur.x + nc.number(), cur.y};
                builder.line_to(p);
                cur = p;
                break;
            }
            case 'V': {
                Vec2 p{cur.x, nc.number()};
                builder.line_to(p);
                cur = p;
                break;
            }
            case 'v': {
                Vec2 p{cur.x, cur.y + nc.number()};
                builder.line_to(p);
                cur = p;
                break;
            }
            case 'C': {
                Vec2 c1{nc.number(), nc.number()}, c2{nc.number(), nc.number()}, p{nc.number(), nc.number()};
                builder.cubic_to(c1, c2, p);
                cur = p;
                break;
            }
            case 'c': {
                Vec2 c1 = rel(nc.number(), nc.number());
                Vec2 c2 = rel(nc.number(), nc.number());
                Vec2 p = rel(nc.number(), nc.number());
                builder.cubic_to(c1, c2, p);
                cur = p;
                break;
            }
            case 'S': {
                Vec2 c2{nc.number(), nc.number()}, p{nc.number(), nc.number()};
                builder.smooth_cubic_to(c2, p);
                cur = p;
                break;
            }
            case 's': {
                Vec2 c2 = rel(nc.number(), nc.number());
                Vec2 p = rel(nc.number(), nc.number());
                builder.smooth_cubic_to(c2, p);
                cur = p;
                break;
            }
            case 'Q': {
                Vec2 q{nc.number(), nc.number()}, p{nc.number(), nc.number()};
                builder.quad_to(q, p);
                cur = p;
                break;
            }
            case 'q': {
                Vec2 q = rel(nc.number(), nc.number());
                Vec2 p = rel(nc.number(), nc.number());
                builder.quad_to(q, p);
                cur = p;
                break;
            }
            case 'T': {
                Vec2 p{nc.number(), nc.number()};
                builder.smooth_quad_to(p);
                cur = p;
                break;
            }
            case 't': {
                Vec2 p = rel(nc.number(), nc.number());
                builder.smooth_quad_to(p);
                cur = p;
                break;
            }
            case 'A': {
                double rx = nc.number(), ry = nc.number(), rot = nc.number();
                int laf = nc.flag(), sf = nc.flag();
                Vec2 p{nc.number(), nc.number()};
                builder.arc_to(rx, ry, rot, laf, sf, p);
                cur = p;
                break;
            }
            case 'a': {
                double rx = nc.number(), ry = nc.number(), rot = nc.number();
                int laf = nc.flag(), sf = nc.flag();
                Vec2 p = rel(nc.number(), nc.number());
                builder.arc_to(rx, ry, rot, laf, sf, p);
                cur = p;
                break;
            }
            case 'Z':
            case 'z': {
                builder.close();
                cur = builder.current();
                break;
            }
            default:
                throw ParseError(std::string("unknown path command: ") + cmd);
        }
    }
    return builder.take();
}

struct PaintState {
    Affine2x3 transform = Affine2x3::identity();
    std::array<float, 3> fill_rgb = {0, 0, 0};
    bool fill_none = false;
    bool fill_unsupported = false;
    float fill_opacity = 1.0f;
    float opacity = 1.0f;
};

inline double parse_length(const std::string& v) {
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str()) throw ParseError("bad length: " + v);
    return x;  // unit suffixes (px, pt, ...) are ignored
}

inline void apply_style_properties(PaintState& st, const std::string& name, const std::string& value,
                                   bool& unsupported_paint) {
    if (name == "fill") {
        std::array<float, 3> rgb = st.fill_rgb;
        bool none = false;
        if (parse_paint(value, rgb, none)) {
            st.fill_rgb = rgb;
            st.fill_none = none;
            st.fill_unsupported = false;
        } else {
            unsupported_paint = true;
            st.fill_unsupported = true;
        }
    } else if (name == "fill-opacity") {
        st.fill_opacity = std::clamp(static_cast<float>(parse_length(value)), 0.0f, 1.0f);
    } else if (name == "opacity") {
        st.opacity = st.opacity * std::clamp(static_cast<float>(parse_length(value)), 0.0f, 1.0f);
    }
}

inline void apply_presentation(PaintState& st, const Tag& tag, bool& unsupported_paint) {
    if (const std::string* tf = tag.find("transform"))
        st.transform = parse_transform_list(*tf).then(st.transform);
    for (const char* key : {"fill", "fill-opacity", "opacity"}) {
        if (const std::string* v = tag.find(key)) apply_style_properties(st, key, *v, unsupported_paint);
    }
    if (const std::string* style = tag.find("style")) {
        size_t pos = 0;
        while (pos < style->size()) {
            size_t colon = style->find(':', pos);
            if (colon == std::string::npos) break;
            size_t semi = style->find(';', colon);
            if (semi == std::string::npos) semi = style->size();
            auto trim = [](std::string s) {
                while (!s.empty() && is_ws(s.front())) s.erase(s.begin());
                while (!s.empty() && is_ws(s.back())) s.pop_back();
                return s;
            };
            std::string name = trim(style->substr(pos, colon - pos));
            std::string value = trim(style->substr(colon + 1, semi - colon - 1));
            apply_style_properties(st, name, value, unsupported_paint);
            pos = semi + 1;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// parse_svg
// ---------------------------------------------------------------------------
inline SvgDocument parse_svg(const std::string& text) {
    detail::XmlScanner scanner(text);
    SvgDocument doc;
    std::vector<detail::PaintState> stack;
    stack.push_back({});
    bool saw_svg = false;
    int skip_depth = 0;  // inside an unsupported container

    auto emit_paths = [&](std::vector<BezierPath>&& paths, const detail::PaintState& st) {
        if (st.fill_none || st.fill_unsupported) return;
        for (BezierPath& p : paths) {
            if (p.points.size() < 4) continue;
            SvgEntry entry;
            // no validate here: overlong paths stay representable so the
            // dataset builder can filter them
            entry.path.closed = p.closed;
            entry.path.points.reserve(p.points.size());
            for (Vec2 q : p.points) entry.path.points.push_back(st.transform.apply(q));
            entry.rgba = {st.fill_rgb[0], st.fill_rgb[1], st.fill_rgb[2], st.fill_opacity};
            entry.opacity = st.opacity;
            doc.entries.push_back(std::move(entry));
        }
    };

    while (auto tag_opt = scanner.next()) {
        detail::Tag& tag = *tag_opt;
        const std::string& name = tag.name;

        if (tag.closing) {
            if (skip_depth > 0) {
                --skip_depth;
                continue;
            }
            if (name == "g" || name == "svg" || name == "a" || name == "switch") {
                if (stack.size() > 1) stack.pop_back();
            }
            continue;
        }
        if (skip_depth > 0) {
            if (!tag.self_closing) ++skip_depth;
            continue;
        }

        static const std::vector<std::string> unsupported = {
            "text",    "tspan",   "image",   "filter",        "linearGradient",
            "radialGradient", "pattern", "mask",  "clipPath", "marker", "symbol", "foreignObject"};
        if (std::find(unsupported.begin(), unsupported.end(), name) != unsupported.end()) {
            doc.warnings.push_back("unsupported element skipped: " + name);
            if (!tag.self_closing) ++skip_depth;
            continue;
        }

        bool unsupported_paint = false;
        if (name == "svg") {
            saw_svg = true;
            detail::PaintState st = stack.back();
            double vb_x = 0, vb_y = 0, vb_w = 0, vb_h = 0;
            bool has_vb = false;
            if (const std::string* vb = tag.find("viewBox")) {
                detail::NumberCursor nc(*vb);
                vb_x = nc.number();
                vb_y = nc.number();
                vb_w = nc.number();
                vb_h = nc.number();
                has_vb = true;
            }
            if (const std::string* w = tag.find("width")) doc.width = detail::parse_length(*w);
            if (const std::string* h = tag.find("height")) doc.height = detail::parse_length(*h);
            if (doc.width <= 0 && has_vb) doc.width = vb_w;
            if (doc.height <= 0 && has_vb) doc.height = vb_h;
            if (doc.width <= 0 || doc.height <= 0)
                throw ParseError("svg element lacks usable width/height or viewBox");
            if (has_vb) {
                // map viewBox into the canvas
                Affine2x3 m = Affine2x3::translation(-vb_x, -vb_y)
                                  .then(Affine2x3::scaling(doc.width / vb_w, doc.height / vb_h));
                st.transform = m.then(st.transform);
            }
            detail::apply_presentation(st, tag, unsupported_paint);
            if (!tag.self_closing) stack.push_back(st);
            continue;
        }
        if (!saw_svg) continue;

        detail::PaintState st = stack.back();
        detail::apply_presentation(st, tag, unsupported_paint);
        if (unsupported_paint) doc.warnings.push_back("unsupported paint on <" + name + ">, element skipped");

        if (name == "g" || name == "a" || name == "switch") {
            if (!tag.self_closing) stack.push_back(st);
            continue;
        }
        if (name == "defs") {
            doc.warnings.push_back("defs content ignored");
            if (!tag.self_closing) ++skip_depth;
            continue;
        }

        auto attr_num = [&](const char* key, double fallback) {
            const std::string* v = tag.find(key);
            return v ? detail::parse_length(*v) : fallback;
        };

        if (name == "path") {
            const std::string* d = tag.find("d");
            if (!d) {
                doc.warnings.push_back("path element without d attribute");
                continue;
            }
            emit_paths(detail::parse_path_data(*d), st);
        } else if (name == "rect") {
            double x = attr_num("x", 0), y = attr_num("y", 0);
            double w = attr_num("width", 0), h = attr_num("height", 0);
            double rx = attr_num("rx", 0), ry = attr_num("ry", rx);
            if (rx <= 0) rx = ry;
            if (w <= 0 || h <= 0) {
                doc.warnings.push_back("rect with non-positive size skipped");
                continue;
            }
            detail::PathBuilder b;
            if (rx > 0) {
                rx = std::min(rx, w / 2);
                ry = std::min(ry <= 0 ? rx : ry, h / 2);
                b.move_to({x + rx, y});
                b.line_to({x + w - rx, y});
                b.arc_to(rx, ry, 0, 0, 1, {x + w, y + ry});
                b.line_to({x + w, y + h - ry});
                b.arc_to(rx, ry, 0, 0, 1, {x + w - rx, y + h});
                b.line_to({x + rx, y + h});
                b.arc_to(rx, ry, 0, 0, 1, {x, y + h - ry});
                b.line_to({x, y + ry});
                b.arc_to(rx, ry, 0, 0, 1, {x + rx, y});
            } else {
                b.move_to({x, y});
                b.line_to({x + w, y});
                b.line_to({x + w, y + h});
                b.line_to({x, y + h});
            }
            b.close();
            emit_paths(b.take(), st);
        } else if (name == "circle" || name == "ellipse") {
            double cx = attr_num("cx", 0), cy = attr_num("cy", 0);
            double rx = name == "circle" ? attr_num("r", 0) : attr_num("rx", 0);
            double ry = name == "circle" ? rx : attr_num("ry", 0);
            if (rx <= 0 || ry <= 0) {
                doc.warnings.push_back(name + " with non-positive radius skipped");
                continue;
            }
            detail::PathBuilder b;
            b.move_to({cx + rx, cy});
            b.arc_to(rx, ry, 0, 0, 1, {cx - rx, cy});
            b.arc_to(rx, ry, 0, 0, 1, {cx + rx, cy});
            b.close();
            emit_paths(b.take(), st);
        } else if (name == "line") {
            detail::PathBuilder b;
            b.move_to({attr_num("x1", 0), attr_num("y1", 0)});
            b.line_to({attr_num("x2", 0), attr_num("y2", 0)});
            emit_paths(b.take(), st);
        } else if (name == "polygon" || name == "polyline") {
            const std::string* pts = tag.find("points");
            if (!pts) continue;
            detail::NumberCursor nc(*pts);
            detail::PathBuilder b;
            bool first = true;
            while (!nc.done()) {
                Vec2 p{nc.number(), nc.number()};
                if (first) {
                    b.move_to(p);
                    first = false;
                } else {
                    b.line_to(p);
                }
            }
            if (name == "polygon") b.close();
            emit_paths(b.take(), st);
        } else if (name == "style" || name == "title" || name == "desc" || name == "metadata") {
            if (!tag.self_closing) ++skip_depth;
        }
        // other elements are ignored silently
    }
    if (!saw_svg) throw ParseError("no <svg> root element found");
    return doc;
}

// ---------------------------------------------------------------------------
// serialize_svg: SVG 1.1 subset, M/C/Z commands only
// ---------------------------------------------------------------------------
inline std::string color_hex(const std::array<float, 4>& rgba) {
    char buf[8];
    auto q = [](float v) {
        return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    };
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", q(rgba[0]), q(rgba[1]), q(rgba[2]));
    return buf;
}

inline std::string path_data_string(const BezierPath& path) {
    std::string d;
    auto put = [&](Vec2 p) {
        d += format_float(p.x, 6);
        d += ' ';
        d += format_float(p.y, 6);
    };
    d += "M ";
    put(path.points[0]);
    int s = path.segment_count();
    for (int i = 0; i < s; ++i) {
        auto seg = path.segment(i);
        d += " C ";
        put(seg[1]);
        d += ' ';
        put(seg[2]);
        d += ' ';
        put(seg[3]);
    }
    if (path.closed) d += " Z";
    return d;
}

inline std::string serialize_svg(const SvgDocument& doc) {
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_float(doc.width, 6) +
           "\" height=\"" + format_float(doc.height, 6) + "\" viewBox=\"0 0 " +
           format_float(doc.width, 6) + " " + format_float(doc.height, 6) + "\">\n";
    for (const SvgEntry& e : doc.entries) {
        out += "  <path d=\"" + path_data_string(e.path) + "\" fill=\"" + color_hex(e.rgba) + "\"";
        if (e.rgba[3] < 1.0f) out += " fill-opacity=\"" + format_float(e.rgba[3], 6) + "\"";
        if (e.opacity < 1.0f) out += " opacity=\"" + format_float(e.opacity, 6) + "\"";
        out += "/>\n";
    }
    out += "</svg>\n";
    return out;
}

}  // namespace t2v::svg
