#include "csg0/toyscenes.hpp"

#include "csg0/errors.hpp"
#include "csg0/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace csg0 {

namespace {

const std::map<std::string, ClassRole>& role_names() {
    static const std::map<std::string, ClassRole> names{
        {"sky", ClassRole::Sky},       {"background", ClassRole::Background}, {"building", ClassRole::Building},
        {"sidewalk", ClassRole::Sidewalk}, {"road", ClassRole::Road},         {"object", ClassRole::Object},
        {"attachment", ClassRole::Attachment}, {"pole", ClassRole::Pole},     {"marking", ClassRole::Marking}};
    return names;
}

std::string role_name(ClassRole r) {
    for (const auto& [name, role] : role_names()) {
        if (role == r) {
            return name;
        }
    }
    return "object";
}

std::uint64_t domain_hash(std::string_view s) {
    std::uint64_t h = 0x243F6A8885A308D3ULL;
    for (unsigned char c : s) {
        h = hash_combine(h, c);
    }
    return h;
}

void check_keys(const Json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j.items()) {
        if (!allowed.contains(key)) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(where + ": key '" + key + "' has the wrong type");
    }
}

struct Rect {
    std::size_t y0, y1, x0, x1; // half-open
};

void fill(SemanticMap& m, const Rect& r, int id) {
    for (std::size_t i = r.y0; i < r.y1; ++i) {
        for (std::size_t j = r.x0; j < r.x1; ++j) {
            m.at(i, j) = id;
        }
    }
}

std::size_t rows_for(double fraction, std::size_t h) {
    return static_cast<std::size_t>(std::lround(fraction * static_cast<double>(h)));
}

// k distinct indices from [0, n), in draw order.
std::vector<std::size_t> pick_slots(Rng& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(idx[i], idx[i + rng.below(n - i)]);
    }
    idx.resize(k);
    return idx;
}

} // namespace

const ClassStyle& DomainSpec::style(int id) const {
    for (const auto& c : classes) {
        if (c.id == id) {
            return c;
        }
    }
    throw ValidationError("class " + std::to_string(id) + " is not part of domain '" + domain + "'");
}

bool DomainSpec::has_class(int id) const {
    return std::any_of(classes.begin(), classes.end(), [id](const ClassStyle& c) { return c.id == id; });
}

DomainSpec domain_spec_from_json(const Json& j) {
    check_keys(j, {"domain", "height", "width", "layout", "classes"}, "domain spec");
    DomainSpec spec;
    spec.domain = get_or<std::string>(j, "domain", "", "domain spec");
    spec.height = get_or<std::size_t>(j, "height", spec.height, "domain spec");
    spec.width = get_or<std::size_t>(j, "width", spec.width, "domain spec");
    const std::string where = "domain spec '" + spec.domain + "'";
    if (spec.domain.empty()) {
        throw ConfigError("domain spec: missing 'domain'");
    }
    if (spec.height < 8 || spec.width < 8) {
        throw ConfigError(where + ": image must be at least 8x8");
    }
    if (j.contains("layout")) {
        const auto& l = j.at("layout");
        check_keys(l, {"sky_fraction", "road_fraction", "buildings", "objects"}, where + " layout");
        auto& out = spec.layout;
        out.sky_fraction = get_or(l, "sky_fraction", out.sky_fraction, where);
        out.road_fraction = get_or(l, "road_fraction", out.road_fraction, where);
        out.buildings = get_or(l, "buildings", out.buildings, where);
        out.objects = get_or(l, "objects", out.objects, where);
        for (const auto& r : {out.sky_fraction, out.road_fraction}) {
            if (!(r[0] >= 0.0 && r[0] <= r[1] && r[1] < 0.6)) {
                throw ConfigError(where + ": band fractions must satisfy 0 <= lo <= hi < 0.6");
            }
        }
        if (out.buildings[0] > out.buildings[1] || out.objects[0] > out.objects[1] || out.objects[1] == 0) {
            throw ConfigError(where + ": count ranges must be [min, max] with min <= max");
        }
    }
    if (!j.contains("classes") || !j.at("classes").is_array()) {
        throw ConfigError(where + ": 'classes' must be an array");
    }
    std::set<int> ids;
    std::size_t skies = 0;
    std::size_t roads = 0;
    for (const auto& c : j.at("classes")) {
        check_keys(c, {"id", "name", "role", "color", "noise", "stripe_period", "stripe_amplitude", "probability"},
                   where + " class");
        ClassStyle s;
        s.id = get_or(c, "id", -1, where);
        s.name = get_or<std::string>(c, "name", "", where);
        const auto role = get_or<std::string>(c, "role", "", where);
        if (!role_names().contains(role)) {
            throw ConfigError(where + ": class '" + s.name + "' has unknown role '" + role + "'");
        }
        s.role = role_names().at(role);
        s.color = get_or(c, "color", s.color, where);
        s.noise = get_or(c, "noise", s.noise, where);
        s.stripe_period = get_or(c, "stripe_period", s.stripe_period, where);
        s.stripe_amplitude = get_or(c, "stripe_amplitude", s.stripe_amplitude, where);
        s.probability = get_or(c, "probability", s.probability, where);
        if (s.id < 0 || !ids.insert(s.id).second) {
            throw ConfigError(where + ": class ids must be unique and non-negative");
        }
        if (!(s.probability >= 0.0 && s.probability <= 1.0) || s.noise < 0.0) {
            throw ConfigError(where + ": class '" + s.name + "' has an invalid probability or noise");
        }
        skies += s.role == ClassRole::Sky;
        roads += s.role == ClassRole::Road;
        spec.classes.push_back(std::move(s));
    }
    if (skies != 1 || roads != 1) {
        throw ConfigError(where + ": need exactly one sky class and one road class");
    }
    return spec;
}

Json to_json(const DomainSpec& spec) {
    Json classes = Json::array();
    for (const auto& c : spec.classes) {
        classes.push_back({{"id", c.id},
                           {"name", c.name},
                           {"role", role_name(c.role)},
                           {"color", c.color},
                           {"noise", c.noise},
                           {"stripe_period", c.stripe_period},
                           {"stripe_amplitude", c.stripe_amplitude},
                           {"probability", c.probability}});
    }
    return {{"domain", spec.domain},
            {"height", spec.height},
            {"width", spec.width},
            {"layout",
             {{"sky_fraction", spec.layout.sky_fraction},
              {"road_fraction", spec.layout.road_fraction},
              {"buildings", spec.layout.buildings},
              {"objects", spec.layout.objects}}},
            {"classes", classes}};
}

DomainSpec load_domain_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open domain spec " + path.string());
    }
    try {
        return domain_spec_from_json(Json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void check_spec_against(const DomainSpec& spec, const LabelRegistry& registry) {
    if (!registry.has_domain(spec.domain)) {
        throw ValidationError("domain '" + spec.domain + "' is not in the registry");
    }
    const auto usable = registry.sampleable_ids(spec.domain);
    for (const auto& c : spec.classes) {
        if (!std::binary_search(usable.begin(), usable.end(), c.id)) {
            throw ValidationError("class " + std::to_string(c.id) + " ('" + c.name +
                                  "') is not available in domain '" + spec.domain + "'");
        }
    }
}

double pixel_noise(std::uint64_t seed, std::size_t i, std::size_t j, std::size_t channel) {
    const std::uint64_t h = hash_combine(hash_combine(hash_combine(mix64(seed), i), j), channel);
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

SemanticMap generate_layout(const DomainSpec& spec, std::uint64_t seed) {
    const std::size_t h = spec.height;
    const std::size_t w = spec.width;
    const auto& lay = spec.layout;
    Rng rng(hash_combine(seed, domain_hash(spec.domain)));

    // Presence draws come first, one per class in spec order.
    std::vector<const ClassStyle*> present;
    const ClassStyle* sky = nullptr;
    const ClassStyle* road = nullptr;
    for (const auto& c : spec.classes) {
        const bool on = rng.bernoulli(c.probability);
        if (c.role == ClassRole::Sky) {
            sky = &c;
        } else if (c.role == ClassRole::Road) {
            road = &c;
        } else if (on) {
            present.push_back(&c);
        }
    }
    auto first_of = [&](ClassRole r) -> const ClassStyle* {
        for (const auto* c : present) {
            if (c->role == r) {
                return c;
            }
        }
        return nullptr;
    };
    auto all_of = [&](ClassRole r) {
        std::vector<const ClassStyle*> out;
        for (const auto* c : present) {
            if (c->role == r) {
                out.push_back(c);
            }
        }
        return out;
    };

    const std::size_t sky_rows = std::clamp<std::size_t>(
        rows_for(rng.uniform(lay.sky_fraction[0], lay.sky_fraction[1]), h), 1, h / 2);
    const std::size_t road_rows = std::clamp<std::size_t>(
        rows_for(rng.uniform(lay.road_fraction[0], lay.road_fraction[1]), h), 2, h / 2);
    const std::size_t road_top = h - road_rows;
    const ClassStyle* walk = first_of(ClassRole::Sidewalk);
    const std::size_t walk_rows = walk ? std::max<std::size_t>(1, h / 16) : 0;
    const std::size_t ground_top = road_top - std::min(walk_rows, road_top - sky_rows);
    const ClassStyle* backdrop = first_of(ClassRole::Background);

    SemanticMap m(h, w, sky->id);
    fill(m, {sky_rows, ground_top, 0, w}, backdrop ? backdrop->id : sky->id);
    if (walk) {
        fill(m, {ground_top, road_top, 0, w}, walk->id);
    }
    fill(m, {road_top, h, 0, w}, road->id);

    std::vector<Rect> buildings;
    if (const ClassStyle* b = first_of(ClassRole::Building); b && lay.buildings[1] > 0) {
        const std::size_t slots = lay.buildings[1];
        const std::size_t count = static_cast<std::size_t>(rng.range(static_cast<long>(lay.buildings[0]),
                                                                     static_cast<long>(lay.buildings[1])));
        const std::size_t slot_w = w / slots;
        for (std::size_t s : pick_slots(rng, slots, count)) {
            const std::size_t inset = slot_w / 4;
            Rect r{0, ground_top, s * slot_w + rng.below(inset + 1), (s + 1) * slot_w - rng.below(inset + 1)};
            const std::size_t top_max = ground_top > 4 ? ground_top - 4 : 0;
            r.y0 = static_cast<std::size_t>(rng.range(1, static_cast<long>(std::max<std::size_t>(1, top_max))));
            if (r.y0 < r.y1 && r.x0 < r.x1) {
                fill(m, r, b->id);
                buildings.push_back(r);
            }
        }
    }
    for (const auto* p : all_of(ClassRole::Pole)) {
        const std::size_t x = rng.below(w);
        const std::size_t top = rng.below(std::max<std::size_t>(1, sky_rows));
        fill(m, {top, ground_top, x, std::min(w, x + 1)}, p->id);
    }
    for (const auto* a : all_of(ClassRole::Attachment)) {
        // On a building when there is one, otherwise hung in the backdrop band.
        Rect host = buildings.empty() ? Rect{std::min(sky_rows, ground_top - 1) - std::min<std::size_t>(2, sky_rows),
                                             ground_top, 0, w}
                                      : buildings[rng.below(buildings.size())];
        const std::size_t hh = std::min<std::size_t>(host.y1 - host.y0, 2 + rng.below(3));
        const std::size_t ww = std::min<std::size_t>(host.x1 - host.x0, 3 + rng.below(4));
        const std::size_t y0 = host.y0 + rng.below(host.y1 - host.y0 - hh + 1);
        const std::size_t x0 = host.x0 + rng.below(host.x1 - host.x0 - ww + 1);
        fill(m, {y0, y0 + hh, x0, x0 + ww}, a->id);
    }
    for (const auto* mk : all_of(ClassRole::Marking)) {
        const std::size_t y0 = road_top + rng.below(road_rows - 1);
        for (std::size_t j = 0; j < w; ++j) {
            if ((j / 3) % 2 == 0) {
                m.at(y0, j) = mk->id;
            }
        }
    }

    // Objects sit in disjoint road slots so every placed instance stays visible.
    const auto objects = all_of(ClassRole::Object);
    if (!objects.empty()) {
        std::vector<const ClassStyle*> instances;
        for (const auto* o : objects) {
            const auto n = rng.range(static_cast<long>(std::max<std::size_t>(1, lay.objects[0])),
                                     static_cast<long>(lay.objects[1]));
            instances.insert(instances.end(), static_cast<std::size_t>(n), o);
        }
        const std::size_t slots = std::max(objects.size(), w / 8);
        if (instances.size() > slots) {
            // Keep one instance per class, then fill the remaining slots in order.
            std::vector<const ClassStyle*> kept(objects.begin(), objects.end());
            for (const auto* o : instances) {
                if (kept.size() == slots) {
                    break;
                }
                if (std::count(kept.begin(), kept.end(), o) <
                    std::count(instances.begin(), instances.end(), o)) {
                    kept.push_back(o);
                }
            }
            instances = kept;
        }
        const std::size_t slot_w = w / slots;
        const auto chosen = pick_slots(rng, slots, instances.size());
        for (std::size_t k = 0; k < instances.size(); ++k) {
            const std::size_t ow = std::max<std::size_t>(1, slot_w / 2 + rng.below(slot_w - slot_w / 2));
            const std::size_t oh = std::min<std::size_t>(road_rows + 1, 3 + rng.below(4));
            const std::size_t x0 = chosen[k] * slot_w + rng.below(slot_w - ow + 1);
            const std::size_t y1 = h - rng.below(std::max<std::size_t>(1, road_rows - 1));
            fill(m, {y1 - std::min(oh, y1), y1, x0, x0 + ow}, instances[k]->id);
        }
    }
    return m;
}

Tensor render(const SemanticMap& mask, const DomainSpec& spec, std::uint64_t seed) {
    const std::size_t h = mask.height;
    const std::size_t w = mask.width;
    std::map<int, const ClassStyle*> styles;
    for (int id : mask.labels) {
        if (!styles.contains(id)) {
            styles[id] = &spec.style(id);
        }
    }
    std::vector<double> img(3 * h * w);
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const ClassStyle& s = *styles.at(mask.at(i, j));
            double stripe = 0.0;
            if (s.stripe_period > 0) {
                stripe = (i % s.stripe_period) < (s.stripe_period + 1) / 2 ? s.stripe_amplitude : -s.stripe_amplitude;
            }
            for (std::size_t c = 0; c < 3; ++c) {
                double v = s.color[c] + stripe;
                if (s.noise != 0.0) {
                    v += s.noise * pixel_noise(seed, i, j, c);
                }
                img[(c * h + i) * w + j] = std::clamp(v, -1.0, 1.0);
            }
        }
    }
    return Tensor::from_data({1, 3, h, w}, std::move(img));
}

Scene generate_scene(const DomainSpec& spec, std::uint64_t seed) {
    SemanticMap mask = generate_layout(spec, seed);
    Tensor image = render(mask, spec, seed);
    return {std::move(mask), std::move(image), seed};
}

std::vector<Scene> make_dataset(const DomainSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw ValidationError("make_dataset: n must be at least 1");
    }
    std::vector<Scene> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.push_back(generate_scene(spec, seed + k));
    }
    return out;
}

} // namespace csg0
