#include "vlnav/envsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "vlnav/tensor.hpp"
#include "vlnav/textparse.hpp"

namespace vlnav {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

double wrap_angle(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) {
        a += kTwoPi;
    }
    if (a >= kTwoPi) {
        a = 0.0;
    }
    return a;
}

std::size_t sector_of(double heading, std::size_t views) {
    const double w = kTwoPi / static_cast<double>(views);
    return static_cast<std::size_t>(std::floor(wrap_angle(heading) / w + 0.5)) % views;
}

std::array<double, 4> position_features(double x, double y) {
    return {std::sin(x / 4.0), std::cos(x / 4.0), std::sin(y / 4.0), std::cos(y / 4.0)};
}

std::size_t category_index(const std::string& c) {
    const auto& cats = object_categories();
    auto it = std::find(cats.begin(), cats.end(), c);
    if (it == cats.end()) {
        throw std::invalid_argument("unknown object category: " + c);
    }
    return static_cast<std::size_t>(it - cats.begin());
}

struct DijkstraResult {
    std::vector<double> dist;
    std::vector<NodeId> prev;
};

DijkstraResult dijkstra(const EnvironmentGraph& env, NodeId source) {
    const std::size_t n = env.size();
    DijkstraResult r{std::vector<double>(n, kInf), std::vector<NodeId>(n, -1)};
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    r.dist[static_cast<std::size_t>(source)] = 0.0;
    pq.emplace(0.0, source);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > r.dist[static_cast<std::size_t>(u)]) {
            continue;
        }
        for (NodeId v : env.neighbors(u)) {
            const double nd = d + env.edge_length(u, v);
            if (nd < r.dist[static_cast<std::size_t>(v)]) {
                r.dist[static_cast<std::size_t>(v)] = nd;
                r.prev[static_cast<std::size_t>(v)] = u;
                pq.emplace(nd, v);
            }
        }
    }
    return r;
}

std::vector<NodeId> trace(const DijkstraResult& r, NodeId source, NodeId target) {
    std::vector<NodeId> path;
    for (NodeId v = target; v != -1; v = r.prev[static_cast<std::size_t>(v)]) {
        path.push_back(v);
        if (v == source) {
            break;
        }
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::size_t poisson(Rng& rng, double lambda) {
    const double limit = std::exp(-lambda);
    std::size_t k = 0;
    double p = rng.uniform();
    while (p > limit) {
        ++k;
        p *= rng.uniform();
    }
    return k;
}

std::optional<EnvironmentGraph> try_generate(std::uint64_t seed, Rng& rng, int num_nodes, int num_views,
                                              double object_density) {
    const auto k_nodes = static_cast<std::size_t>(num_nodes);
    const auto n_views = static_cast<std::size_t>(num_views);
    const double side = 3.0 * std::sqrt(static_cast<double>(num_nodes)) + 4.0;
    const double sector_width = kTwoPi / static_cast<double>(n_views);

    std::vector<Vec3> pos(k_nodes);
    pos[0] = {side / 2.0, side / 2.0, 0.0};
    std::vector<std::vector<bool>> taken(k_nodes, std::vector<bool>(n_views, false));
    std::set<std::pair<NodeId, NodeId>> edges;

    for (std::size_t i = 1; i < k_nodes; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
            const std::size_t j = rng.below(i);
            std::vector<std::size_t> free;
            for (std::size_t s = 0; s < n_views; ++s) {
                if (!taken[j][s]) {
                    free.push_back(s);
                }
            }
            if (free.empty()) {
                continue;
            }
            const std::size_t s = free[rng.below(free.size())];
            const double h = wrap_angle(static_cast<double>(s) * sector_width + rng.uniform(-0.35, 0.35) * sector_width);
            const double len = rng.uniform(1.8, 3.6);
            const Vec3 p{pos[j].x + len * std::sin(h), pos[j].y + len * std::cos(h), 0.0};
            if (p.x < 0.0 || p.y < 0.0 || p.x > side || p.y > side) {
                continue;
            }
            bool clear = true;
            for (std::size_t q = 0; q < i && clear; ++q) {
                clear = distance(p, pos[q]) >= kMinEdgeLength;
            }
            if (!clear) {
                continue;
            }
            pos[i] = p;
            taken[j][s] = true;
            taken[i][sector_of(h + std::numbers::pi, n_views)] = true;
            edges.emplace(static_cast<NodeId>(j), static_cast<NodeId>(i));
            placed = true;
        }
        if (!placed) {
            return std::nullopt;
        }
    }

    // Loop-closing edges between nearby nodes whose view sectors are still free.
    for (std::size_t a = 0; a < k_nodes; ++a) {
        for (std::size_t b = a + 1; b < k_nodes; ++b) {
            const auto key = std::make_pair(static_cast<NodeId>(a), static_cast<NodeId>(b));
            if (edges.count(key) != 0) {
                continue;
            }
            const double d = distance(pos[a], pos[b]);
            if (d < kMinEdgeLength || d > kMaxEdgeLength) {
                continue;
            }
            if (rng.uniform() >= 0.3) {
                continue;
            }
            const std::size_t sa = sector_of(heading_to(pos[a], pos[b]), n_views);
            const std::size_t sb = sector_of(heading_to(pos[b], pos[a]), n_views);
            if (taken[a][sa] || taken[b][sb]) {
                continue;
            }
            taken[a][sa] = true;
            taken[b][sb] = true;
            edges.insert(key);
        }
    }

    std::vector<NodeRecord> nodes(k_nodes);
    const auto& cats = object_categories();
    const auto& rooms = room_words();
    for (std::size_t i = 0; i < k_nodes; ++i) {
        NodeRecord& nr = nodes[i];
        nr.id = static_cast<NodeId>(i);
        nr.position = pos[i];
        nr.room = rooms[rng.below(rooms.size())];
        for (std::size_t v = 0; v < n_views; ++v) {
            nr.viewpoints.push_back(ViewDescriptor{static_cast<double>(v) * sector_width, 0.0, {}, -1});
        }
        const std::size_t count = std::min(poisson(rng, object_density), 2 * n_views);
        for (std::size_t o = 0; o < count; ++o) {
            nr.objects.push_back(ObjectAnnotation{cats[rng.below(cats.size())], {}, rng.below(n_views)});
        }
    }
    for (const auto& [a, b] : edges) {
        nodes[static_cast<std::size_t>(a)].viewpoints[sector_of(heading_to(pos[a], pos[b]), n_views)].neighbor = b;
        nodes[static_cast<std::size_t>(b)].viewpoints[sector_of(heading_to(pos[b], pos[a]), n_views)].neighbor = a;
    }

    // Topology is final; descriptors need geodesic distances to landmarks.
    EnvironmentGraph skeleton("env-" + std::to_string(seed), seed, nodes, edges);
    std::vector<std::vector<double>> landmark_dist(k_nodes, std::vector<double>(kCategoryChannels, kInf));
    for (std::size_t v = 0; v < k_nodes; ++v) {
        const auto dist = geodesic_distances(skeleton, static_cast<NodeId>(v));
        for (std::size_t u = 0; u < k_nodes; ++u) {
            for (const auto& obj : nodes[u].objects) {
                double& slot = landmark_dist[v][category_index(obj.category)];
                slot = std::min(slot, dist[u]);
            }
        }
    }
    auto noise = [&] { return rng.uniform(-kDescriptorNoise, kDescriptorNoise); };
    for (std::size_t u = 0; u < k_nodes; ++u) {
        NodeRecord& nr = nodes[u];
        for (auto& view : nr.viewpoints) {
            std::vector<double> raw(kRawDim, 0.0);
            if (view.neighbor >= 0) {
                const auto nb = static_cast<std::size_t>(view.neighbor);
                const double hop = distance(pos[u], pos[nb]);
                for (std::size_t c = 0; c < kCategoryChannels; ++c) {
                    raw[c] = std::max(0.0, 1.0 - (hop + landmark_dist[nb][c]) / kSightRange);
                }
            }
            const auto pf = position_features(pos[u].x + 2.0 * std::sin(view.heading), pos[u].y + 2.0 * std::cos(view.heading));
            std::copy(pf.begin(), pf.end(), raw.begin() + kCategoryChannels);
            for (double& r : raw) {
                r += noise();
            }
            view.raw_descriptor = std::move(raw);
        }
        for (auto& obj : nr.objects) {
            std::vector<double> raw(kRawDim, 0.0);
            raw[category_index(obj.category)] = 1.0;
            const auto pf = position_features(pos[u].x, pos[u].y);
            std::copy(pf.begin(), pf.end(), raw.begin() + kCategoryChannels);
            for (double& r : raw) {
                r += noise();
            }
            obj.raw_descriptor = std::move(raw);
        }
    }
    return EnvironmentGraph("env-" + std::to_string(seed), seed, std::move(nodes), std::move(edges));
}

struct VerbForm {
    const char* surface;
    const char* lemma;
};

constexpr VerbForm kPassVerbs[] = {
    {"walk past", "walk"},   {"go through", "go"},         {"turn toward", "turn"},
    {"head to", "head"},     {"pass", "pass"},             {"continue past", "continue"},
    {"walking past", "walk"}, {"turning toward", "turn"}, {"passing", "pass"},
};
constexpr VerbForm kStopVerbs[] = {{"stop at", "stop"}, {"wait by", "wait"}, {"stopping at", "stop"}};

struct GoalTemplate {
    const char* go_surface;
    const char* go_lemma;
    const char* find_surface;
    const char* find_lemma;
};

constexpr GoalTemplate kGoalTemplates[] = {
    {"go to", "go", "find", "find"},
    {"head to", "head", "locate", "locate"},
    {"enter", "enter", "find", "find"},
    {"go into", "go", "locate", "locate"},
};

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') {
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }
    return s;
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double heading_to(const Vec3& a, const Vec3& b) { return wrap_angle(std::atan2(b.x - a.x, b.y - a.y)); }

bool NodeRecord::has_category(const std::string& c) const {
    return std::any_of(objects.begin(), objects.end(), [&](const ObjectAnnotation& o) { return o.category == c; });
}

EnvironmentGraph::EnvironmentGraph(std::string env_id, std::uint64_t seed, std::vector<NodeRecord> nodes,
                                   std::set<std::pair<NodeId, NodeId>> edges)
    : env_id_(std::move(env_id)), seed_(seed), nodes_(std::move(nodes)), adjacency_(nodes_.size()) {
    for (auto [a, b] : edges) {
        if (a > b) {
            std::swap(a, b);
        }
        if (!valid_node(a) || !valid_node(b)) {
            throw std::out_of_range("edge references an unknown node");
        }
        edges_.emplace(a, b);
    }
    for (const auto& [a, b] : edges_) {
        adjacency_[static_cast<std::size_t>(a)].push_back(b);
        adjacency_[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& adj : adjacency_) {
        std::sort(adj.begin(), adj.end());
    }
}

const NodeRecord& EnvironmentGraph::node(NodeId id) const {
    if (!valid_node(id)) {
        throw std::out_of_range("unknown node id " + std::to_string(id));
    }
    return nodes_[static_cast<std::size_t>(id)];
}

const std::vector<NodeId>& EnvironmentGraph::neighbors(NodeId id) const {
    if (!valid_node(id)) {
        throw std::out_of_range("unknown node id " + std::to_string(id));
    }
    return adjacency_[static_cast<std::size_t>(id)];
}

bool EnvironmentGraph::has_edge(NodeId a, NodeId b) const {
    return edges_.count({std::min(a, b), std::max(a, b)}) != 0;
}

double EnvironmentGraph::edge_length(NodeId a, NodeId b) const {
    return distance(node(a).position, node(b).position) * meters_per_unit();
}

void EnvironmentGraph::validate() const {
    auto fail = [](const std::string& msg) { throw std::logic_error("invalid environment: " + msg); };
    if (nodes_.empty()) {
        fail("no nodes");
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].id != static_cast<NodeId>(i)) {
            fail("node ids are not 0..K-1");
        }
    }
    for (const auto& [a, b] : edges_) {
        if (a == b) {
            fail("self-loop");
        }
    }
    std::vector<bool> seen(nodes_.size(), false);
    std::vector<NodeId> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const NodeId u = stack.back();
        stack.pop_back();
        for (NodeId v : neighbors(u)) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = true;
                stack.push_back(v);
            }
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        fail("graph is not connected");
    }
    const auto& cats = object_categories();
    for (const auto& nr : nodes_) {
        if (nr.viewpoints.empty()) {
            fail("node without viewpoints");
        }
        for (std::size_t v = 1; v < nr.viewpoints.size(); ++v) {
            if (!(nr.viewpoints[v].heading > nr.viewpoints[v - 1].heading)) {
                fail("viewpoint headings not strictly increasing");
            }
        }
        for (NodeId nb : neighbors(nr.id)) {
            const auto count = std::count_if(nr.viewpoints.begin(), nr.viewpoints.end(),
                                             [&](const ViewDescriptor& vd) { return vd.neighbor == nb; });
            if (count != 1) {
                fail("neighbor not visible from exactly one viewpoint");
            }
        }
        for (const auto& vd : nr.viewpoints) {
            if (vd.neighbor >= 0 && !has_edge(nr.id, vd.neighbor)) {
                fail("viewpoint assigned to a non-neighbor");
            }
        }
        for (const auto& o : nr.objects) {
            if (std::find(cats.begin(), cats.end(), o.category) == cats.end()) {
                fail("object category outside the lexicon: " + o.category);
            }
            if (o.viewpoint_index >= nr.viewpoints.size()) {
                fail("object viewpoint index out of range");
            }
        }
    }
}

EnvironmentGraph generate_environment(std::uint64_t seed, int num_nodes, int num_views, double object_density) {
    if (num_nodes < 2) {
        throw std::invalid_argument("num_nodes must be at least 2");
    }
    if (num_views < 1) {
        throw std::invalid_argument("num_views must be at least 1");
    }
    if (num_views < 2 && num_nodes > 2) {
        throw std::invalid_argument("a single viewpoint cannot host a connected graph of more than 2 nodes");
    }
    if (!(object_density >= 0.0)) {
        throw std::invalid_argument("object_density must be non-negative");
    }
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng rng(mix_seed(seed, attempt));
        if (auto env = try_generate(seed, rng, num_nodes, num_views, object_density)) {
            return std::move(*env);
        }
    }
    throw std::runtime_error("could not place the requested graph; try more views or fewer nodes");
}

PathResult shortest_path(const EnvironmentGraph& env, NodeId a, NodeId b) {
    if (!env.valid_node(a) || !env.valid_node(b)) {
        throw std::out_of_range("shortest_path: unknown node id");
    }
    if (a == b) {
        return {{a}, 0.0};
    }
    const auto r = dijkstra(env, a);
    if (!std::isfinite(r.dist[static_cast<std::size_t>(b)])) {
        throw std::runtime_error("shortest_path: unreachable node");
    }
    return {trace(r, a, b), r.dist[static_cast<std::size_t>(b)]};
}

std::vector<double> geodesic_distances(const EnvironmentGraph& env, NodeId source) {
    if (!env.valid_node(source)) {
        throw std::out_of_range("geodesic_distances: unknown node id");
    }
    return dijkstra(env, source).dist;
}

double path_length(const EnvironmentGraph& env, const std::vector<NodeId>& walk) {
    double total = 0.0;
    for (std::size_t i = 1; i < walk.size(); ++i) {
        if (walk[i] != walk[i - 1]) {
            total += env.edge_length(walk[i - 1], walk[i]);
        }
    }
    return total;
}

Episode make_episode(const EnvironmentGraph& env, std::uint64_t seed, EpisodeMode mode) {
    Rng rng(mix_seed(env.seed(), seed));
    const auto k = static_cast<NodeId>(env.size());
    std::vector<DijkstraResult> all;
    all.reserve(env.size());
    for (NodeId s = 0; s < k; ++s) {
        all.push_back(dijkstra(env, s));
    }
    auto hops = [&](NodeId a, NodeId b) { return trace(all[static_cast<std::size_t>(a)], a, b).size() - 1; };

    struct Candidate {
        NodeId start;
        NodeId goal;
        std::string target;
    };
    std::vector<Candidate> in_range;
    std::optional<Candidate> longest;
    std::size_t longest_hops = 0;
    auto consider = [&](Candidate c) {
        const std::size_t h = hops(c.start, c.goal);
        if (h >= 4 && h <= 7) {
            in_range.push_back(c);
        }
        if (!longest || h > longest_hops) {
            longest = c;
            longest_hops = h;
        }
    };

    bool goal_mode = mode == EpisodeMode::goal_oriented;
    if (goal_mode) {
        // The goal must be the unique nearest holder of the target category.
        for (NodeId s = 0; s < k; ++s) {
            const auto& dist = all[static_cast<std::size_t>(s)].dist;
            for (const auto& cat : object_categories()) {
                NodeId best = -1;
                double best_d = kInf;
                bool unique = true;
                for (NodeId g = 0; g < k; ++g) {
                    if (!env.node(g).has_category(cat)) {
                        continue;
                    }
                    const double d = dist[static_cast<std::size_t>(g)];
                    if (d < best_d - 1e-9) {
                        best = g;
                        best_d = d;
                        unique = true;
                    } else if (std::abs(d - best_d) <= 1e-9) {
                        unique = false;
                    }
                }
                if (best >= 0 && best != s && unique) {
                    consider({s, best, cat});
                }
            }
        }
        if (!longest) {
            goal_mode = false;  // no objects anywhere: fall back to a destination-only instruction
        }
    }
    if (!goal_mode) {
        for (NodeId s = 0; s < k; ++s) {
            for (NodeId g = 0; g < k; ++g) {
                if (s != g) {
                    consider({s, g, {}});
                }
            }
        }
    }
    const Candidate pick = in_range.empty() ? *longest : in_range[rng.below(in_range.size())];

    Episode ep;
    ep.episode_id = env.env_id() + "-" + mode_name(mode) + "-" + std::to_string(seed);
    ep.env_id = env.env_id();
    ep.start_node = pick.start;
    ep.goal_node = pick.goal;
    ep.gt_path = trace(all[static_cast<std::size_t>(pick.start)], pick.start, pick.goal);
    ep.max_steps = kDefaultMaxSteps;

    if (mode == EpisodeMode::goal_oriented) {
        const auto& tpl = kGoalTemplates[rng.below(std::size(kGoalTemplates))];
        const std::string& room = env.node(pick.goal).room;
        std::string text = std::string(tpl.go_surface) + " the " + room;
        ep.instruction_objects.push_back(room);
        ep.instruction_actions.push_back(tpl.go_lemma);
        if (!pick.target.empty()) {
            ep.target_category = pick.target;
            text += std::string(" and ") + tpl.find_surface + " the " + pick.target;
            ep.instruction_objects.push_back(pick.target);
            ep.instruction_actions.push_back(tpl.find_lemma);
        }
        ep.instruction_text = capitalize(text) + ".";
        return ep;
    }

    std::string text;
    for (std::size_t i = 1; i < ep.gt_path.size(); ++i) {
        const NodeRecord& nr = env.node(ep.gt_path[i]);
        const std::string landmark =
            nr.objects.empty() ? nr.room : nr.objects[rng.below(nr.objects.size())].category;
        const bool last = i + 1 == ep.gt_path.size();
        const VerbForm& verb = last ? kStopVerbs[rng.below(std::size(kStopVerbs))]
                                    : kPassVerbs[rng.below(std::size(kPassVerbs))];
        if (!text.empty()) {
            text += ", ";
        }
        text += std::string(verb.surface) + " the " + landmark;
        ep.instruction_objects.push_back(landmark);
        ep.instruction_actions.push_back(verb.lemma);
    }
    ep.instruction_text = capitalize(text) + ".";
    return ep;
}

Observation observe(const EnvironmentGraph& env, NodeId node) {
    const NodeRecord& nr = env.node(node);
    Observation obs;
    obs.node = node;
    obs.position = nr.position;
    obs.viewpoints = nr.viewpoints;
    obs.objects = nr.objects;
    for (NodeId nb : env.neighbors(node)) {
        NeighborPose np;
        np.id = nb;
        for (std::size_t v = 0; v < nr.viewpoints.size(); ++v) {
            if (nr.viewpoints[v].neighbor == nb) {
                np.view_index = v;
            }
        }
        const Vec3& p = env.node(nb).position;
        np.heading = heading_to(nr.position, p);
        const double horizontal = std::hypot(p.x - nr.position.x, p.y - nr.position.y);
        np.pitch = std::atan2(p.z - nr.position.z, horizontal);
        np.distance = distance(nr.position, p);
        obs.neighbors.push_back(np);
    }
    return obs;
}

std::string mode_name(EpisodeMode m) { return m == EpisodeMode::goal_oriented ? "goal" : "path"; }

EpisodeMode parse_mode(const std::string& s) {
    if (s == "goal" || s == "goal-oriented" || s == "goal_oriented") {
        return EpisodeMode::goal_oriented;
    }
    if (s == "path" || s == "path-oriented" || s == "path_oriented") {
        return EpisodeMode::path_oriented;
    }
    throw std::invalid_argument("unknown episode mode: " + s);
}

}  // namespace vlnav
