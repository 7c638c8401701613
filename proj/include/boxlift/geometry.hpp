#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace boxlift {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wrap an angle into [-pi, pi); wrap(pi) == -pi.
double wrap_angle(double a);

/// SE(2) pose; yaw is kept wrapped in [-pi, pi).
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
};

/// (a o b): apply b first, then a.
Pose2 pose_compose(const Pose2& a, const Pose2& b);
Pose2 pose_inverse(const Pose2& p);

/// Oriented BEV box. l is the extent along the heading, w the lateral extent.
struct BoxBEV {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double l = 0.0;
    double yaw = 0.0;
    double score = 0.0;

    bool valid() const { return w > 0.0 && l > 0.0 && score >= 0.0 && score <= 1.0; }
};

/// Rotate + translate the box center, add the pose yaw; w, l, score unchanged.
BoxBEV transform_box(const BoxBEV& b, const Pose2& t);

/// Rotate (px - x, py - y) by -yaw into the box frame and test
/// |x'| <= l/2 and |y'| <= w/2 with inclusive boundaries.
bool point_in_box(double px, double py, const BoxBEV& b);

/// Corners in CCW order.
std::array<std::array<double, 2>, 4> box_corners(const BoxBEV& b);

/// Intersection over union via Sutherland-Hodgman clipping + shoelace area.
/// Degenerate (zero-area) boxes give 0.
double rotated_iou(const BoxBEV& a, const BoxBEV& b);

/// Greedy NMS: visit boxes by (score desc, input index asc), suppress any
/// later box with IoU strictly above the threshold. Survivors are returned in
/// visit order.
std::vector<BoxBEV> nms_bev(const std::vector<BoxBEV>& boxes, double iou_threshold);

/// Box list text format: one box per line, "x y w l yaw score".
std::string box_to_line(const BoxBEV& b);
BoxBEV box_from_line(const std::string& line, int line_no);  // throws ParseError
std::vector<BoxBEV> read_box_list(std::istream& is);         // throws ParseError
void write_box_list(std::ostream& os, const std::vector<BoxBEV>& boxes);

}  // namespace boxlift
