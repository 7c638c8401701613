#include "boxlift/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "boxlift/error.hpp"

namespace boxlift {

std::uint32_t FieldSpec::q_max() const {
    return bits == 32 ? 0xFFFFFFFFu : (1u << bits) - 1u;
}

double FieldSpec::scale() const {
    return (v_max - v_min) / static_cast<double>(q_max());
}

std::int64_t FieldSpec::zero_point() const {
    return std::llround(-v_min / scale());
}

void FieldSpec::validate() const {
    if (bits != 4 && bits != 8 && bits != 16 && bits != 32)
        throw ConfigError("field bits must be 4, 8, 16 or 32");
    if (!(v_max > v_min)) throw ConfigError("field range requires v_max > v_min");
}

std::uint32_t quantize_field(double v, const FieldSpec& f) {
    f.validate();
    if (f.pass_through()) return std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const double s = f.scale();
    // Anything this far outside the range clips to a rail regardless, and the
    // clamp keeps llround inside its defined domain.
    const double vc = std::clamp(v, f.v_min - 2.0 * s, f.v_max + 2.0 * s);
    const std::int64_t code = std::llround(vc / s) + f.zero_point();
    return static_cast<std::uint32_t>(
        std::clamp<std::int64_t>(code, 0, static_cast<std::int64_t>(f.q_max())));
}

double dequantize_field(std::uint32_t code, const FieldSpec& f) {
    f.validate();
    if (f.pass_through()) return static_cast<double>(std::bit_cast<float>(code));
    if (code > f.q_max())
        throw DecodeError("code " + std::to_string(code) + " exceeds q_max " +
                          std::to_string(f.q_max()));
    return f.scale() * (static_cast<double>(code) - static_cast<double>(f.zero_point()));
}

void MessageSchema::validate() const {
    if (k_max < 0) throw ConfigError("k_max must be >= 0");
    for (const FieldSpec& f : fields) {
        f.validate();
        if (f.bits != fields[0].bits)
            throw ConfigError("all fields must share one bit width");
    }
}

MessageSchema MessageSchema::with_defaults(double x_min, double x_max, double y_min, double y_max,
                                           int bits, int k_max) {
    MessageSchema s;
    s.fields[0] = {x_min, x_max, bits};
    s.fields[1] = {y_min, y_max, bits};
    s.fields[2] = {0.0, 12.75, bits};
    s.fields[3] = {0.0, 25.5, bits};
    s.fields[4] = {-kPi, kPi, bits};
    s.fields[5] = {0.0, 1.0, bits};
    s.k_max = k_max;
    s.validate();
    return s;
}

BoxMessage encode_message(const std::vector<BoxBEV>& boxes, const MessageSchema& schema) {
    schema.validate();
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (boxes[i].score != boxes[j].score) return boxes[i].score > boxes[j].score;
        return i < j;
    });

    BoxMessage m;
    m.schema = schema;
    m.records.assign(static_cast<std::size_t>(schema.k_max), {0, 0, 0, 0, 0, 0});
    const std::size_t n = std::min<std::size_t>(boxes.size(), static_cast<std::size_t>(schema.k_max));
    for (std::size_t k = 0; k < n; ++k) {
        const BoxBEV& b = boxes[order[k]];
        const double v[6] = {b.x, b.y, b.w, b.l, wrap_angle(b.yaw), b.score};
        for (int f = 0; f < 6; ++f) m.records[k][f] = quantize_field(v[f], schema.fields[f]);
    }
    return m;
}

std::vector<BoxBEV> decode_message(const BoxMessage& m, const MessageSchema& schema) {
    schema.validate();
    if (m.records.size() != static_cast<std::size_t>(schema.k_max))
        throw DecodeError("message holds " + std::to_string(m.records.size()) +
                          " records, schema expects " + std::to_string(schema.k_max));
    std::vector<BoxBEV> boxes;
    for (const auto& rec : m.records) {
        if (rec[2] == 0 && rec[3] == 0) continue;  // in-band padding: w and l both zero
        BoxBEV b;
        b.x = dequantize_field(rec[0], schema.fields[0]);
        b.y = dequantize_field(rec[1], schema.fields[1]);
        b.w = dequantize_field(rec[2], schema.fields[2]);
        b.l = dequantize_field(rec[3], schema.fields[3]);
        b.yaw = wrap_angle(dequantize_field(rec[4], schema.fields[4]));
        b.score = dequantize_field(rec[5], schema.fields[5]);
        boxes.push_back(b);
    }
    return boxes;
}

std::vector<std::uint8_t> serialize(const BoxMessage& m) {
    m.schema.validate();
    const int bits = m.schema.bits();
    std::vector<std::uint8_t> out;
    out.reserve(m.schema.payload_bytes());
    std::size_t nibble = 0;  // only used for 4-bit packing
    for (const auto& rec : m.records) {
        for (const std::uint32_t code : rec) {
            switch (bits) {
                case 4:
                    if (nibble % 2 == 0)
                        out.push_back(static_cast<std::uint8_t>(code & 0xF));
                    else
                        out.back() |= static_cast<std::uint8_t>((code & 0xF) << 4);
                    ++nibble;
                    break;
                case 8:
                    out.push_back(static_cast<std::uint8_t>(code & 0xFF));
                    break;
                case 16:
                    out.push_back(static_cast<std::uint8_t>(code & 0xFF));
                    out.push_back(static_cast<std::uint8_t>((code >> 8) & 0xFF));
                    break;
                default:  // 32
                    for (int sh = 0; sh < 32; sh += 8)
                        out.push_back(static_cast<std::uint8_t>((code >> sh) & 0xFF));
            }
        }
    }
    return out;
}

BoxMessage deserialize(const std::vector<std::uint8_t>& bytes, const MessageSchema& schema) {
    schema.validate();
    if (bytes.size() != schema.payload_bytes())
        throw DecodeError("payload is " + std::to_string(bytes.size()) + " bytes, schema expects " +
                          std::to_string(schema.payload_bytes()));
    BoxMessage m;
    m.schema = schema;
    m.records.assign(static_cast<std::size_t>(schema.k_max), {0, 0, 0, 0, 0, 0});
    const int bits = schema.bits();
    std::size_t pos = 0;  // byte position, or nibble position for 4-bit
    for (auto& rec : m.records) {
        for (std::uint32_t& code : rec) {
            switch (bits) {
                case 4:
                    code = (bytes[pos / 2] >> ((pos % 2) * 4)) & 0xF;
                    ++pos;
                    break;
                case 8:
                    code = bytes[pos++];
                    break;
                case 16:
                    code = bytes[pos] | (static_cast<std::uint32_t>(bytes[pos + 1]) << 8);
                    pos += 2;
                    break;
                default:  // 32
                    code = 0;
                    for (int sh = 0; sh < 32; sh += 8)
                        code |= static_cast<std::uint32_t>(bytes[pos++]) << sh;
            }
        }
    }
    return m;
}

double bandwidth_bps(const MessageSchema& schema, double rate_hz) {
    if (rate_hz <= 0.0) throw ConfigError("rate must be positive");
    return static_cast<double>(schema.payload_bits()) * rate_hz;
}

}  // namespace boxlift
