#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "boxlift/geometry.hpp"

namespace boxlift {

/// Zero-point quantizer for one scalar field.
///   scale s = (v_max - v_min) / q_max,  zero point z = round(-v_min / s),
///   code    = clip(round(v / s) + z, 0, q_max)
/// with q_max = 2^bits - 1 and round() = half away from zero (the rounding
/// mode is part of the wire contract for cross-language bit-exactness).
/// bits == 32 is a pass-through: the code is the IEEE-754 bit pattern of the
/// value cast to float.
struct FieldSpec {
    double v_min = 0.0;
    double v_max = 1.0;
    int bits = 8;  // 4, 8, 16, or 32 (pass-through)

    bool pass_through() const { return bits == 32; }
    std::uint32_t q_max() const;
    double scale() const;
    std::int64_t zero_point() const;
    void validate() const;
};

std::uint32_t quantize_field(double v, const FieldSpec& f);
double dequantize_field(std::uint32_t code, const FieldSpec& f);  // DecodeError if code > q_max

/// Six field specs in wire order (x, y, w, l, yaw, score) plus the record cap.
/// All fields must share one bit width; the payload size depends only on
/// (k_max, bits), never on the box contents.
struct MessageSchema {
    std::array<FieldSpec, 6> fields;  // x, y, w, l, yaw, score
    int k_max = 20;

    int bits() const { return fields[0].bits; }
    std::size_t payload_bits() const { return static_cast<std::size_t>(k_max) * 6 * bits(); }
    std::size_t payload_bytes() const { return payload_bits() / 8; }
    void validate() const;

    /// Default ranges: x and y cover the sender's detection range; w in
    /// [0, 12.75] and l in [0, 25.5] (about 0.05 m / 0.1 m steps at INT8);
    /// yaw in [-pi, pi); score in [0, 1].
    static MessageSchema with_defaults(double x_min, double x_max, double y_min, double y_max,
                                       int bits = 8, int k_max = 20);
};

/// A fixed block of k_max quantized records; trailing records past the real
/// boxes are all-zero padding. There is no header on the wire, so padding is
/// detected in-band: a record is padding iff its w AND l codes are both zero
/// (real boxes have strictly positive extents).
struct BoxMessage {
    MessageSchema schema;
    std::vector<std::array<std::uint32_t, 6>> records;
};

/// Sort by (score desc, input index asc), keep the top k_max, quantize each
/// field, zero-pad the rest. Yaw is wrapped before quantization.
BoxMessage encode_message(const std::vector<BoxBEV>& boxes, const MessageSchema& schema);

/// Dequantize all non-padding records. Throws DecodeError on a malformed
/// record count.
std::vector<BoxBEV> decode_message(const BoxMessage& m, const MessageSchema& schema);

/// Wire layout: records in order, fields in schema order. 16-bit codes are
/// little-endian; 4-bit codes pack two per byte low-nibble-first (the x field
/// of record 0 sits in the low nibble of byte 0); 32-bit pass-through floats
/// are little-endian bit patterns. No header, no checksum.
std::vector<std::uint8_t> serialize(const BoxMessage& m);
BoxMessage deserialize(const std::vector<std::uint8_t>& bytes, const MessageSchema& schema);

/// payload_bits * rate.
double bandwidth_bps(const MessageSchema& schema, double rate_hz);

}  // namespace boxlift
