#include "prkd/data.hpp"

#include "prkd/error.hpp"

#include <torch/torch.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace prkd::data {

namespace {

struct Point {
    double x;
    double y;
};

using Polygon = std::vector<Point>;

struct Ellipse {
    double cx, cy, rx, ry;
};

// Union of `body` shapes minus `cuts`, with darker `seams` drawn on top.
struct Garment {
    std::vector<Polygon> body;
    std::vector<Ellipse> body_ellipses;
    std::vector<Polygon> cuts;
    std::vector<Ellipse> cut_ellipses;
    std::vector<Polygon> seams;
};

bool inside(const Polygon& poly, Point p) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) in = !in;
    }
    return in;
}

bool inside(const Ellipse& e, Point p) {
    const double dx = (p.x - e.cx) / e.rx;
    const double dy = (p.y - e.cy) / e.ry;
    return dx * dx + dy * dy <= 1.0;
}

Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
    int pick(int n) { return static_cast<int>(rng_() % static_cast<std::uint64_t>(n)); }
    double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 rng_;
};

// Coordinates: x right, y down, garment roughly within [-0.9, 0.9]^2.
Garment make_garment(int label, Sampler& s) {
    Garment g;
    const double w = s.uniform(0.42, 0.6);  // half torso width
    switch (label) {
        case 0:    // t-shirt
        case 6: {  // shirt
            const double top = s.uniform(-0.75, -0.6);
            const double bottom = s.uniform(0.7, 0.88);
            g.body.push_back(rect(-w, top, w, bottom));
            const double sleeve = label == 0 ? s.uniform(0.3, 0.45) : s.uniform(0.8, 1.1);
            const double reach = label == 0 ? s.uniform(0.28, 0.38) : s.uniform(0.3, 0.4);
            g.body.push_back({{-w, top}, {-w - reach, top + sleeve}, {-w - reach + 0.2, top + sleeve + 0.1}, {-w, top + 0.35}});
            g.body.push_back({{w, top}, {w + reach, top + sleeve}, {w + reach - 0.2, top + sleeve + 0.1}, {w, top + 0.35}});
            g.cut_ellipses.push_back({0.0, top, s.uniform(0.15, 0.22), s.uniform(0.08, 0.15)});
            if (label == 6) {
                g.seams.push_back(rect(-0.02, top + 0.05, 0.02, bottom));
                g.body.push_back({{-0.2, top - 0.05}, {0.0, top + 0.15}, {0.2, top - 0.05}});
            }
            break;
        }
        case 1: {  // trouser
            const double gap = s.uniform(0.04, 0.1);
            const double leg = s.uniform(0.16, 0.24);
            const double flare = s.uniform(0.0, 0.08);
            g.body.push_back(rect(-gap - leg, -0.85, gap + leg, -0.6));
            g.body.push_back({{-gap - leg, -0.6}, {-gap, -0.6}, {-gap + 0.02, 0.88}, {-gap - leg - flare, 0.88}});
            g.body.push_back({{gap, -0.6}, {gap + leg, -0.6}, {gap + leg + flare, 0.88}, {gap - 0.02, 0.88}});
            break;
        }
        case 2:    // pullover
        case 4: {  // coat
            const double top = s.uniform(-0.75, -0.65);
            const double bottom = label == 2 ? s.uniform(0.6, 0.8) : s.uniform(0.8, 0.92);
            g.body.push_back(rect(-w, top, w, bottom));
            const double arm = s.uniform(0.14, 0.2);
            g.body.push_back({{-w, top}, {-w - arm - 0.1, bottom - 0.05}, {-w - 0.05, bottom}, {-w + 0.05, top + 0.3}});
            g.body.push_back({{w, top}, {w + arm + 0.1, bottom - 0.05}, {w + 0.05, bottom}, {w - 0.05, top + 0.3}});
            g.cut_ellipses.push_back({0.0, top, s.uniform(0.12, 0.2), s.uniform(0.06, 0.12)});
            if (label == 4) {
                g.seams.push_back(rect(-0.025, top + 0.1, 0.025, bottom));
                g.seams.push_back(rect(-w + 0.1, 0.15, -w + 0.3, 0.19));
                g.seams.push_back(rect(w - 0.3, 0.15, w - 0.1, 0.19));
            } else {
                g.seams.push_back(rect(-w, bottom - 0.1, w, bottom - 0.06));
            }
            break;
        }
        case 3: {  // dress
            const double top = s.uniform(-0.85, -0.7);
            const double waist = s.uniform(-0.2, 0.0);
            const double hem = s.uniform(0.6, 0.9);
            const double tw = s.uniform(0.18, 0.3);
            g.body.push_back({{-tw, top}, {tw, top}, {tw * 0.8, waist}, {-tw * 0.8, waist}});
            g.body.push_back({{-tw * 0.8, waist}, {tw * 0.8, waist}, {w + 0.1, hem}, {-w - 0.1, hem}});
            g.cut_ellipses.push_back({0.0, top, tw * 0.6, 0.1});
            break;
        }
        case 5: {  // sandal
            const double sole = s.uniform(0.35, 0.5);
            g.body.push_back({{-0.85, sole}, {0.85, sole - 0.05}, {0.85, sole + 0.1}, {-0.85, sole + 0.12}});
            const int straps = 2 + s.pick(3);
            for (int k = 0; k < straps; ++k) {
                const double x = -0.65 + 1.3 * (k + 0.5) / straps;
                g.body.push_back({{x - 0.08, sole}, {x + 0.08, sole}, {x + 0.02, sole - s.uniform(0.3, 0.55)},
                                  {x - 0.14, sole - s.uniform(0.3, 0.55)}});
            }
            g.body.push_back({{-0.85, sole}, {-0.65, sole}, {-0.7, -0.1}, {-0.85, -0.1}});
            break;
        }
        case 7: {  // sneaker
            const double top = s.uniform(-0.15, 0.05);
            g.body.push_back({{-0.85, top}, {-0.3, top - 0.05}, {0.2, top + 0.15}, {0.85, 0.3}, {0.85, 0.55}, {-0.85, 0.55}});
            g.seams.push_back(rect(-0.85, 0.45, 0.85, 0.55));
            g.seams.push_back({{-0.2, top + 0.05}, {0.3, top + 0.25}, {0.25, top + 0.32}, {-0.25, top + 0.12}});
            break;
        }
        case 8: {  // bag
            const double top = s.uniform(-0.3, -0.1);
            const double bw = s.uniform(0.55, 0.8);
            g.body.push_back({{-bw + 0.08, top}, {bw - 0.08, top}, {bw, 0.8}, {-bw, 0.8}});
            const double hr = s.uniform(0.25, 0.4);
            g.body_ellipses.push_back({0.0, top, hr, hr * 1.2});
            g.cut_ellipses.push_back({0.0, top, hr - 0.08, hr * 1.2 - 0.08});
            if (s.pick(2) == 0) g.seams.push_back(rect(-bw + 0.05, top + 0.15, bw - 0.05, top + 0.2));
            break;
        }
        case 9: {  // ankle boot
            const double shaft = s.uniform(-0.8, -0.55);
            g.body.push_back({{-0.7, shaft}, {0.0, shaft}, {0.05, 0.05}, {0.8, 0.3}, {0.85, 0.65}, {-0.75, 0.65}});
            g.seams.push_back(rect(-0.75, 0.55, 0.85, 0.65));
            g.seams.push_back(rect(-0.1, shaft + 0.05, -0.05, 0.2));
            break;
        }
        default:
            throw ConfigError("unknown garment class");
    }
    return g;
}

}  // namespace

ImageSet synthesize_garments(std::int64_t count, std::uint64_t seed) {
    if (count < 0) throw ConfigError("synthesize_garments: negative count");
    constexpr int size = 28;
    constexpr int ss = 3;  // supersampling per axis
    ImageSet set;
    set.images = torch::zeros({count, size, size}, torch::kFloat);
    set.labels.resize(static_cast<std::size_t>(count));
    auto acc = set.images.accessor<float, 3>();

    Sampler s(seed * 0x2545F4914F6CDD1DULL + 17);
    for (std::int64_t i = 0; i < count; ++i) {
        const int label = s.pick(10);
        set.labels[static_cast<std::size_t>(i)] = label;
        const Garment g = make_garment(label, s);

        const double base = s.uniform(0.35, 1.0);
        const double angle = s.uniform(-0.12, 0.12);
        const double scale = s.uniform(0.85, 1.05);
        const double sx = s.uniform(-0.06, 0.06);
        const double sy = s.uniform(-0.06, 0.06);
        const int texture = s.pick(4);
        const double freq = s.uniform(6.0, 16.0);
        const double phase = s.uniform(0.0, 2.0 * std::numbers::pi);
        const double depth = s.uniform(0.1, 0.35);
        const double seam = s.uniform(0.35, 0.7);
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);

        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                double total = 0.0;
                for (int a = 0; a < ss; ++a) {
                    for (int b = 0; b < ss; ++b) {
                        const double u = ((c + (b + 0.5) / ss) / size) * 2.0 - 1.0;
                        const double v = ((r + (a + 0.5) / ss) / size) * 2.0 - 1.0;
                        const Point p{(ca * (u - sx) + sa * (v - sy)) / scale, (-sa * (u - sx) + ca * (v - sy)) / scale};

                        bool on = false;
                        for (const auto& poly : g.body) on = on || inside(poly, p);
                        for (const auto& e : g.body_ellipses) on = on || inside(e, p);
                        if (!on) continue;
                        bool cut = false;
                        for (const auto& poly : g.cuts) cut = cut || inside(poly, p);
                        for (const auto& e : g.cut_ellipses) cut = cut || inside(e, p);
                        if (cut) continue;

                        double t = 1.0;
                        switch (texture) {
                            case 1: t = 1.0 - depth * (0.5 + 0.5 * std::sin(freq * p.y + phase)); break;
                            case 2: t = 1.0 - depth * (0.5 + 0.5 * std::sin(freq * p.x + phase) * std::sin(freq * p.y)); break;
                            case 3: t = 1.0 - depth * (0.5 + 0.5 * p.y); break;
                            default: break;
                        }
                        for (const auto& poly : g.seams)
                            if (inside(poly, p)) t *= seam;
                        total += base * t;
                    }
                }
                acc[i][r][c] = static_cast<float>(std::clamp(total / (ss * ss), 0.0, 1.0));
            }
        }
    }
    return set;
}

void write_synthetic_dataset(const std::filesystem::path& dir, std::int64_t train_count, std::int64_t test_count,
                             std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    write_idx(synthesize_garments(train_count, seed), dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    write_idx(synthesize_garments(test_count, seed + 1), dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
}

}  // namespace prkd::data
