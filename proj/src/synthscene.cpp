// SPDX-License-Identifier: Apache-2.0
#include "geovid/synthscene.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "geovid/errors.hpp"
#include "geovid/numkit/ops.hpp"
#include "geovid/numkit/vlt1.hpp"

namespace geovid::synth {

namespace fs = std::filesystem;

namespace {

// Teachers must not depend on the scene seed.
constexpr std::uint64_t kTeacherSeed = 0x7EAC4E5ULL;

nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
Eigen::Vector3d vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

double deg(double d) { return d * std::numbers::pi / 180.0; }

CameraModel look_camera(const Intrinsics& k, const Eigen::Vector3d& center, double yaw, double pitch) {
    const Eigen::Vector3d f(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), std::sin(pitch));
    const Eigen::Vector3d r = Eigen::Vector3d(std::sin(yaw), -std::cos(yaw), 0.0);
    const Eigen::Vector3d d = f.cross(r);
    Eigen::Matrix3d rot;
    rot.row(0) = r.transpose();
    rot.row(1) = d.normalized().transpose();
    rot.row(2) = f.normalized().transpose();
    return CameraModel(k, rot, -rot * center, ScaleKind::ground_truth);
}

std::vector<double> teacher_matrix(std::size_t in, std::size_t out, std::uint64_t salt) {
    nk::Rng rng(kTeacherSeed ^ salt);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> m(in * out);
    for (auto& v : m) v = n(rng);
    return m;
}

} // namespace

nlohmann::json SceneGeometry::to_json() const {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& b : objects) objs.push_back({{"lo", vec_json(b.lo)}, {"hi", vec_json(b.hi)}, {"class", b.cls}});
    return {{"room_lo", vec_json(room_lo)}, {"room_hi", vec_json(room_hi)}, {"objects", objs}};
}

SceneGeometry SceneGeometry::from_json(const nlohmann::json& j) {
    SceneGeometry g;
    g.room_lo = vec_from(j.at("room_lo"));
    g.room_hi = vec_from(j.at("room_hi"));
    for (const auto& o : j.at("objects")) g.objects.push_back({vec_from(o.at("lo")), vec_from(o.at("hi")), o.at("class").get<int>()});
    return g;
}

Hit cast_ray(const SceneGeometry& g, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) {
    Hit best;
    best.t = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0.0) continue;
        const bool up = dir[a] > 0;
        const double t = ((up ? g.room_hi[a] : g.room_lo[a]) - origin[a]) / dir[a];
        if (t > 0 && t < best.t) {
            best.t = t;
            best.cls = a == 2 ? (up ? kCeiling : kFloor) : kWall;
            best.normal = Eigen::Vector3d::Zero();
            best.normal[a] = up ? -1.0 : 1.0;
        }
    }
    for (const auto& b : g.objects) {
        double t_near = -std::numeric_limits<double>::infinity();
        double t_far = std::numeric_limits<double>::infinity();
        int axis = -1;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
            if (dir[a] == 0.0) {
                miss = origin[a] < b.lo[a] || origin[a] > b.hi[a];
                continue;
            }
            double t1 = (b.lo[a] - origin[a]) / dir[a];
            double t2 = (b.hi[a] - origin[a]) / dir[a];
            if (t1 > t2) std::swap(t1, t2);
            if (t1 > t_near) {
                t_near = t1;
                axis = a;
            }
            t_far = std::min(t_far, t2);
        }
        if (miss || axis < 0 || t_near > t_far || !(t_near > 0) || t_near >= best.t) continue;
        best.t = t_near;
        best.cls = b.cls;
        best.normal = Eigen::Vector3d::Zero();
        best.normal[axis] = dir[axis] > 0 ? -1.0 : 1.0;
    }
    if (best.cls < 0) throw DegenerateInputError("ray escaped the room");
    return best;
}

PixelSample render_pixel(const SceneGeometry& g, const CameraModel& cam, double i, double j) {
    const auto& k = cam.intrinsics();
    const Eigen::Vector3d dir_cam((i - k.cx) / k.fx, (j - k.cy) / k.fy, 1.0);
    const Hit h = cast_ray(g, cam.center(), cam.rotation().transpose() * dir_cam);
    // The camera-frame z of dir_cam is 1, so the ray parameter is the z-depth.
    return {h.t, h.cls, cam.rotation() * h.normal};
}

Intrinsics intrinsics_for(recon::ImageSize size, double fov_deg) {
    if (!(fov_deg > 0 && fov_deg < 180)) throw ParameterError("field of view must be in (0, 180) degrees");
    const double f = 0.5 * static_cast<double>(size.width) / std::tan(0.5 * deg(fov_deg));
    return {f, f, 0.5 * static_cast<double>(size.width - 1), 0.5 * static_cast<double>(size.height - 1)};
}

std::vector<double> patch_descriptors(const DepthMap& depth, const std::vector<int>& labels,
                                      const std::vector<Eigen::Vector3d>& normals_cam, std::size_t patch) {
    const recon::PatchGrid grid = recon::PatchGrid::of({depth.height(), depth.width()}, patch);
    const std::size_t w = depth.width();
    const std::size_t half = patch / 2;
    std::vector<double> out;
    out.reserve(grid.count() * kDescriptorDim);
    for (std::size_t pr = 0; pr < grid.rows; ++pr) {
        for (std::size_t pc = 0; pc < grid.cols; ++pc) {
            double sum = 0, left = 0, right = 0, top = 0, bottom = 0;
            Eigen::Vector3d n = Eigen::Vector3d::Zero();
            std::vector<double> hist(kNumClasses, 0.0);
            for (std::size_t y = 0; y < patch; ++y) {
                for (std::size_t x = 0; x < patch; ++x) {
                    const std::size_t idx = (pr * patch + y) * w + pc * patch + x;
                    const double d = depth.values()[idx];
                    sum += d;
                    (x < half ? left : right) += d;
                    (y < half ? top : bottom) += d;
                    n += normals_cam[idx];
                    hist[static_cast<std::size_t>(labels[idx])] += 1.0;
                }
            }
            const double cnt = static_cast<double>(patch * patch);
            const double m = sum / cnt;
            const double hc = cnt / 2.0;
            out.push_back(m);
            out.push_back(std::log(m));
            out.push_back((right - left) / hc / m);
            out.push_back((bottom - top) / hc / m);
            n /= cnt;
            out.insert(out.end(), {n.x(), n.y(), n.z()});
            for (double h : hist) out.push_back(h / cnt);
            out.push_back(2.0 * (static_cast<double>(pc) + 0.5) / static_cast<double>(grid.cols) - 1.0);
            out.push_back(2.0 * (static_cast<double>(pr) + 0.5) / static_cast<double>(grid.rows) - 1.0);
        }
    }
    return out;
}

TeacherFeatures teacher_features(const std::vector<double>& clean, std::size_t patches, std::size_t teacher_dim) {
    if (clean.size() != patches * kDescriptorDim) throw ShapeError("descriptor buffer has the wrong size");
    constexpr std::size_t geo_in = 8;
    std::vector<double> gx, lx;
    gx.reserve(patches * geo_in);
    lx.reserve(patches * kNumClasses);
    for (std::size_t p = 0; p < patches; ++p) {
        const double* d = clean.data() + p * kDescriptorDim;
        // log depth, slopes, normal, scaled depth, bias
        gx.insert(gx.end(), {d[1], d[2], d[3], d[4], d[5], d[6], d[0] / 5.0, 1.0});
        lx.insert(lx.end(), d + 7, d + 7 + kNumClasses);
    }
    const Tensor g_w = Tensor::constant({geo_in, teacher_dim}, teacher_matrix(geo_in, teacher_dim, 1));
    const Tensor l_w = Tensor::constant({kNumClasses, teacher_dim}, teacher_matrix(kNumClasses, teacher_dim, 2));
    TeacherFeatures t;
    t.geom = nk::normalize_rows(nk::tanh(nk::matmul(Tensor::constant({patches, geo_in}, std::move(gx)), g_w))).detach();
    t.lang = nk::normalize_rows(nk::matmul(Tensor::constant({patches, kNumClasses}, std::move(lx)), l_w)).detach();
    return t;
}

namespace {

std::vector<std::size_t> majority_labels(const std::vector<int>& labels, recon::ImageSize size, std::size_t patch) {
    const recon::PatchGrid grid = recon::PatchGrid::of(size, patch);
    std::vector<std::size_t> out;
    for (std::size_t pr = 0; pr < grid.rows; ++pr) {
        for (std::size_t pc = 0; pc < grid.cols; ++pc) {
            std::vector<std::size_t> count(kNumClasses, 0);
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x)
                    ++count[static_cast<std::size_t>(labels[(pr * patch + y) * size.width + pc * patch + x])];
            out.push_back(static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin()));
        }
    }
    return out;
}

Frame render_frame(const SceneGeometry& g, const CameraModel& cam, const SceneOptions& opts, nk::Rng& noise_rng) {
    const std::size_t h = opts.size.height, w = opts.size.width;
    std::vector<double> depth(h * w);
    std::vector<int> labels(h * w);
    std::vector<Eigen::Vector3d> normals(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const PixelSample s = render_pixel(g, cam, static_cast<double>(c), static_cast<double>(r));
            depth[r * w + c] = s.depth;
            labels[r * w + c] = s.cls;
            normals[r * w + c] = s.normal_cam;
        }
    }
    DepthMap dm(h, w, std::move(depth), ScaleKind::ground_truth);
    const std::size_t patches = recon::PatchGrid::of(opts.size, opts.patch).count();
    std::vector<double> clean = patch_descriptors(dm, labels, normals, opts.patch);
    TeacherFeatures t = teacher_features(clean, patches, opts.teacher_dim);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : clean) v += opts.noise * n(noise_rng);
    Frame f{cam, std::move(dm), labels, Tensor::constant({patches, kDescriptorDim}, std::move(clean)), t.geom, t.lang,
            majority_labels(labels, opts.size, opts.patch)};
    return f;
}

} // namespace

SceneSample gen_scene(std::uint64_t seed, const SceneOptions& opts) {
    if (opts.objects == 0) throw ParameterError("a scene needs at least one object");
    if (opts.frames == 0) throw ParameterError("a scene needs at least one frame");
    recon::PatchGrid::of(opts.size, opts.patch);

    nk::Rng rng(seed);
    auto uni = [&rng](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
    std::normal_distribution<double> gauss(0.0, 1.0);

    SceneSample s;
    s.seed = seed;
    s.options = opts;
    SceneGeometry& g = s.geometry;
    g.room_lo = Eigen::Vector3d::Zero();
    g.room_hi = Eigen::Vector3d(uni(4.0, 6.0), uni(4.0, 6.0), uni(2.5, 3.0));

    // Boxes hug the walls and reach at most 1 m into the room, leaving the
    // central camera region free.
    for (std::size_t k = 0; k < opts.objects; ++k) {
        const int side = static_cast<int>(rng() % 4);
        const int cls = kFirstObjectClass + static_cast<int>(rng() % (kNumClasses - kFirstObjectClass));
        const double along = uni(0.4, 1.2), thick = uni(0.3, 0.7), height = uni(0.4, 1.5), gap = uni(0.05, 0.3);
        const int a = side % 2 == 0 ? 0 : 1; // axis normal to the wall
        const int b = 1 - a;
        const double pos = uni(0.2, g.room_hi[b] - 0.2 - along);
        Box box;
        box.cls = cls;
        box.lo.z() = 0.0;
        box.hi.z() = height;
        box.lo[b] = pos;
        box.hi[b] = pos + along;
        if (side < 2) {
            box.lo[a] = gap;
            box.hi[a] = gap + thick;
        } else {
            box.hi[a] = g.room_hi[a] - gap;
            box.lo[a] = box.hi[a] - thick;
        }
        g.objects.push_back(box);
    }

    const Intrinsics k = intrinsics_for(opts.size, opts.fov_deg);
    const Eigen::Vector3d mid(0.5 * g.room_hi.x(), 0.5 * g.room_hi.y(), 0.0);
    const double radius = uni(0.2, 0.35);
    const double height = uni(1.3, 1.6);
    const double step = deg(uni(5.0, 8.0));
    double yaw = uni(0.0, 2.0 * std::numbers::pi);
    nk::Rng noise_rng(seed ^ 0x9E3779B97F4A7C15ULL);
    for (std::size_t f = 0; f < opts.frames; ++f) {
        const double y = yaw + deg(0.5) * gauss(rng);
        const double pitch = deg(-10.0) + deg(1.0) * gauss(rng);
        Eigen::Vector3d c = mid + radius * Eigen::Vector3d(std::cos(y), std::sin(y), 0.0);
        c.x() += 0.01 * gauss(rng);
        c.y() += 0.01 * gauss(rng);
        c.z() = height + 0.02 * gauss(rng);
        s.frames.push_back(render_frame(g, look_camera(k, c, y, pitch), opts, noise_rng));
        yaw += step;
    }
    return s;
}

EncoderParams EncoderParams::init(std::size_t dim, nk::Rng& rng) {
    EncoderParams p;
    p.weight = nk::random_parameter({kDescriptorDim, dim}, 1.0 / std::sqrt(static_cast<double>(kDescriptorDim)), rng);
    p.bias = Tensor::zeros({dim}, true);
    return p;
}

void EncoderParams::collect(const std::string& prefix, nk::ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Tensor encode(const Tensor& descriptors, const EncoderParams& enc) {
    if (descriptors.cols() != kDescriptorDim) throw ShapeError("descriptor width mismatch");
    return nk::linear(descriptors, enc.weight, enc.bias);
}

TokenSet render_tokens(const Frame& frame, const EncoderParams& enc, std::optional<int> frame_index) {
    return TokenSet(encode(frame.descriptors, enc), nk::TokenRole::base, frame_index);
}

namespace {

fs::path frame_dir(const fs::path& dir, std::size_t f) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", f);
    return dir / "frames" / buf;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

template <typename T>
std::vector<double> as_doubles(const std::vector<T>& v) {
    return std::vector<double>(v.begin(), v.end());
}

} // namespace

void save_scene(const SceneSample& s, const fs::path& dir) {
    fs::create_directories(dir / "frames");
    const auto& o = s.options;
    nlohmann::json j = {{"seed", s.seed},
                        {"frames", s.frames.size()},
                        {"height", o.size.height},
                        {"width", o.size.width},
                        {"patch", o.patch},
                        {"objects", o.objects},
                        {"teacher_dim", o.teacher_dim},
                        {"noise", o.noise},
                        {"fov_deg", o.fov_deg},
                        {"geometry", s.geometry.to_json()}};
    write_json(dir / "scene.json", j);
    for (std::size_t f = 0; f < s.frames.size(); ++f) {
        const Frame& fr = s.frames[f];
        const fs::path fd = frame_dir(dir, f);
        fs::create_directories(fd);
        write_json(fd / "camera.json", camera_to_json(fr.camera));
        nk::vlt1::save(fd / "depth.vlt", {fr.depth.height(), fr.depth.width()}, fr.depth.values());
        nk::vlt1::save(fd / "labels.vlt", {fr.depth.height(), fr.depth.width()}, as_doubles(fr.labels));
        nk::vlt1::save(fd / "patch_labels.vlt", {fr.patch_labels.size()}, as_doubles(fr.patch_labels));
        nk::vlt1::save(fd / "descriptors.vlt", fr.descriptors);
        nk::vlt1::save(fd / "teacher_geom.vlt", fr.teacher_geom);
        nk::vlt1::save(fd / "teacher_lang.vlt", fr.teacher_lang);
    }
}

SceneSample load_scene(const fs::path& dir) {
    const nlohmann::json j = read_json(dir / "scene.json");
    SceneSample s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.options.frames = j.at("frames").get<std::size_t>();
        s.options.size = {j.at("height").get<std::size_t>(), j.at("width").get<std::size_t>()};
        s.options.patch = j.at("patch").get<std::size_t>();
        s.options.objects = j.at("objects").get<std::size_t>();
        s.options.teacher_dim = j.at("teacher_dim").get<std::size_t>();
        s.options.noise = j.at("noise").get<double>();
        s.options.fov_deg = j.at("fov_deg").get<double>();
        s.geometry = SceneGeometry::from_json(j.at("geometry"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError((dir / "scene.json").string() + ": " + e.what());
    }
    for (std::size_t f = 0; f < s.options.frames; ++f) {
        const fs::path fd = frame_dir(dir, f);
        const CameraModel cam = camera_from_json(read_json(fd / "camera.json"));
        const auto depth = nk::vlt1::load(fd / "depth.vlt");
        if (depth.shape.size() != 2) throw IoError("depth file must be 2-D");
        const auto labels = nk::vlt1::load(fd / "labels.vlt");
        const auto patch_labels = nk::vlt1::load(fd / "patch_labels.vlt");
        Frame fr{cam,
                 DepthMap(depth.shape[0], depth.shape[1], depth.data, ScaleKind::ground_truth),
                 std::vector<int>(labels.data.begin(), labels.data.end()),
                 nk::vlt1::load_tensor(fd / "descriptors.vlt"),
                 nk::vlt1::load_tensor(fd / "teacher_geom.vlt"),
                 nk::vlt1::load_tensor(fd / "teacher_lang.vlt"),
                 std::vector<std::size_t>(patch_labels.data.begin(), patch_labels.data.end())};
        s.frames.push_back(std::move(fr));
    }
    return s;
}

} // namespace geovid::synth
