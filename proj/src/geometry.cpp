#include "boxlift/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "boxlift/error.hpp"

namespace boxlift {

double wrap_angle(double a) {
    double r = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
    if (r >= kPi) r -= 2.0 * kPi;   // guards the wrap(pi) == -pi convention
    if (r < -kPi) r += 2.0 * kPi;
    return r;
}

Pose2 pose_compose(const Pose2& a, const Pose2& b) {
    const double ca = std::cos(a.yaw), sa = std::sin(a.yaw);
    Pose2 out;
    out.x = a.x + ca * b.x - sa * b.y;
    out.y = a.y + sa * b.x + ca * b.y;
    out.yaw = wrap_angle(a.yaw + b.yaw);
    return out;
}

Pose2 pose_inverse(const Pose2& p) {
    const double c = std::cos(p.yaw), s = std::sin(p.yaw);
    Pose2 out;
    out.x = -(c * p.x + s * p.y);
    out.y = -(-s * p.x + c * p.y);
    out.yaw = wrap_angle(-p.yaw);
    return out;
}

BoxBEV transform_box(const BoxBEV& b, const Pose2& t) {
    const double c = std::cos(t.yaw), s = std::sin(t.yaw);
    BoxBEV out = b;
    out.x = t.x + c * b.x - s * b.y;
    out.y = t.y + s * b.x + c * b.y;
    out.yaw = wrap_angle(b.yaw + t.yaw);
    return out;
}

bool point_in_box(double px, double py, const BoxBEV& b) {
    const double dx = px - b.x, dy = py - b.y;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    // The boundary is inclusive. The 1e-9 m guard keeps points that sit
    // exactly on the edge in real arithmetic inside despite decimal-grid
    // rounding (cell centers on decimal grids land ~1e-14 off).
    return std::abs(lx) <= b.l * 0.5 + 1e-9 && std::abs(ly) <= b.w * 0.5 + 1e-9;
}

std::array<std::array<double, 2>, 4> box_corners(const BoxBEV& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = b.l * 0.5, hw = b.w * 0.5;
    const double lx[4] = {hl, -hl, -hl, hl};
    const double ly[4] = {hw, hw, -hw, -hw};
    std::array<std::array<double, 2>, 4> out{};
    for (int i = 0; i < 4; ++i) {
        out[i][0] = b.x + c * lx[i] - s * ly[i];
        out[i][1] = b.y + s * lx[i] + c * ly[i];
    }
    return out;
}

namespace {

using Poly = std::vector<std::array<double, 2>>;

double shoelace(const Poly& p) {
    double a = 0.0;
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& u = p[i];
        const auto& v = p[(i + 1) % n];
        a += u[0] * v[1] - v[0] * u[1];
    }
    return 0.5 * std::abs(a);
}

// Clip `subject` against the half-plane left of the directed edge (e0 -> e1).
Poly clip_edge(const Poly& subject, const std::array<double, 2>& e0,
               const std::array<double, 2>& e1) {
    Poly out;
    const std::size_t n = subject.size();
    const double ex = e1[0] - e0[0], ey = e1[1] - e0[1];
    auto side = [&](const std::array<double, 2>& p) {
        return ex * (p[1] - e0[1]) - ey * (p[0] - e0[0]);
    };
    for (std::size_t i = 0; i < n; ++i) {
        const auto& cur = subject[i];
        const auto& nxt = subject[(i + 1) % n];
        const double sc = side(cur), sn = side(nxt);
        if (sc >= 0.0) out.push_back(cur);
        if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
            const double t = sc / (sc - sn);
            out.push_back({cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])});
        }
    }
    return out;
}

}  // namespace

double rotated_iou(const BoxBEV& a, const BoxBEV& b) {
    const double area_a = a.w * a.l, area_b = b.w * b.l;
    if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
    const auto ca = box_corners(a);
    const auto cb = box_corners(b);
    Poly poly(ca.begin(), ca.end());
    for (int i = 0; i < 4 && !poly.empty(); ++i)
        poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
    if (poly.size() < 3) return 0.0;
    const double inter = shoelace(poly);
    const double uni = area_a + area_b - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<BoxBEV> nms_bev(const std::vector<BoxBEV>& boxes, double iou_threshold) {
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (boxes[i].score != boxes[j].score) return boxes[i].score > boxes[j].score;
        return i < j;
    });
    std::vector<BoxBEV> kept;
    for (const std::size_t i : order) {
        bool suppressed = false;
        for (const BoxBEV& k : kept)
            if (rotated_iou(boxes[i], k) > iou_threshold) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(boxes[i]);
    }
    return kept;
}

std::string box_to_line(const BoxBEV& b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g",
                  b.x, b.y, b.w, b.l, b.yaw, b.score);
    return buf;
}

BoxBEV box_from_line(const std::string& line, int line_no) {
    std::istringstream ss(line);
    BoxBEV b;
    if (!(ss >> b.x >> b.y >> b.w >> b.l >> b.yaw >> b.score))
        throw ParseError("expected \"x y w l yaw score\"", line_no);
    std::string extra;
    if (ss >> extra) throw ParseError("trailing tokens after 6 fields", line_no);
    return b;
}

std::vector<BoxBEV> read_box_list(std::istream& is) {
    std::vector<BoxBEV> boxes;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        boxes.push_back(box_from_line(line, line_no));
    }
    return boxes;
}

void write_box_list(std::ostream& os, const std::vector<BoxBEV>& boxes) {
    for (const BoxBEV& b : boxes) os << box_to_line(b) << '\n';
}

}  // namespace boxlift
