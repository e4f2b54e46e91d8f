#include "anno/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace anno::analysis {

PcaResult pca_project(const Eigen::MatrixXd& embeddings, std::size_t n_components) {
    const auto A = embeddings.rows();
    const auto dim = embeddings.cols();
    if (A < 2) throw std::invalid_argument("PCA needs at least 2 annotators");
    if (n_components > static_cast<std::size_t>(std::min(A, dim)))
        throw std::invalid_argument("n_components exceeds min(#annotators, dim)");

    Eigen::MatrixXd centered = embeddings.rowwise() - embeddings.colwise().mean();
    Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(A - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");

    // eigenvalues come out ascending
    const Eigen::VectorXd evals = solver.eigenvalues().reverse();
    Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();
    const double total = std::max(evals.sum(), 1e-300);

    PcaResult result;
    result.coordinates =
        centered * evecs.leftCols(static_cast<Eigen::Index>(n_components));
    for (std::size_t i = 0; i < n_components; ++i)
        result.variance_ratios.push_back(
            std::max(0.0, evals(static_cast<Eigen::Index>(i))) / total);
    return result;
}

std::vector<int> kmeans(const Eigen::MatrixXd& embeddings, std::size_t k, std::uint64_t seed) {
    const auto A = static_cast<std::size_t>(embeddings.rows());
    if (k < 1 || k > A) throw std::invalid_argument("k must be in [1, #annotators]");

    std::mt19937_64 rng(seed);
    std::vector<int> best_assign(A, 0);
    double best_inertia = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart < 10; ++restart) {
        // Forgy init: k distinct points as centers
        std::vector<std::size_t> order(A);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        Eigen::MatrixXd centers(static_cast<Eigen::Index>(k), embeddings.cols());
        for (std::size_t c = 0; c < k; ++c)
            centers.row(static_cast<Eigen::Index>(c)) = embeddings.row(
                static_cast<Eigen::Index>(order[c]));

        std::vector<int> assign(A, 0);
        for (int iter = 0; iter < 100; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < A; ++i) {
                int best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = (embeddings.row(static_cast<Eigen::Index>(i)) -
                                      centers.row(static_cast<Eigen::Index>(c)))
                                         .squaredNorm();
                    if (d < best_d) { best_d = d; best = static_cast<int>(c); }
                }
                if (assign[i] != best) { assign[i] = best; changed = true; }
            }
            for (std::size_t c = 0; c < k; ++c) {
                Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(embeddings.cols());
                int count = 0;
                for (std::size_t i = 0; i < A; ++i)
                    if (assign[i] == static_cast<int>(c)) {
                        sum += embeddings.row(static_cast<Eigen::Index>(i));
                        ++count;
                    }
                if (count > 0) centers.row(static_cast<Eigen::Index>(c)) = sum / count;
            }
            if (!changed) break;
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < A; ++i)
            inertia += (embeddings.row(static_cast<Eigen::Index>(i)) -
                        centers.row(assign[i]))
                           .squaredNorm();
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_assign = assign;
        }
    }
    return best_assign;
}

namespace {

struct Overlap {
    std::size_t count = 0;
    double p_o = 0.0, p_e = 0.0;
};

Overlap pair_overlap(const std::string& a, const std::string& b, const data::Dataset& data) {
    std::size_t n = 0, agree = 0, a_pos = 0, b_pos = 0;
    for (const auto& e : data.entries) {
        auto ia = e.labels.find(a);
        auto ib = e.labels.find(b);
        if (ia == e.labels.end() || ib == e.labels.end()) continue;
        ++n;
        if (ia->second == ib->second) ++agree;
        a_pos += ia->second == 1;
        b_pos += ib->second == 1;
    }
    Overlap o;
    o.count = n;
    if (n == 0) return o;
    const double pa = static_cast<double>(a_pos) / static_cast<double>(n);
    const double pb = static_cast<double>(b_pos) / static_cast<double>(n);
    o.p_o = static_cast<double>(agree) / static_cast<double>(n);
    o.p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    return o;
}

}  // namespace

double cohen_kappa(const std::string& a, const std::string& b, const data::Dataset& data) {
    const Overlap o = pair_overlap(a, b, data);
    if (o.count == 0)
        throw std::invalid_argument("annotators " + a + " and " + b + " share no instance");
    if (o.p_e >= 1.0) return o.p_o >= 1.0 ? 1.0 : 0.0;
    return (o.p_o - o.p_e) / (1.0 - o.p_e);
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine distance undefined for a zero vector");
    return 1.0 - a.dot(b) / (na * nb);
}

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) { mx += x[i]; my += y[i]; }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::runtime_error("correlation undefined: constant variable");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

AgreementReport kappa_cosine_correlation(const embeddings::AnnotatorEmbeddingSet& set,
                                         const data::Dataset& data, std::size_t kmeans_k,
                                         std::uint64_t seed) {
    AgreementReport report;
    std::vector<double> kappas, distances;
    for (std::size_t i = 0; i < set.ids.size(); ++i) {
        for (std::size_t j = i + 1; j < set.ids.size(); ++j) {
            const Overlap o = pair_overlap(set.ids[i], set.ids[j], data);
            if (o.count == 0) continue;
            PairRecord rec;
            rec.annotator_a = set.ids[i];
            rec.annotator_b = set.ids[j];
            rec.overlap_count = o.count;
            rec.kappa = cohen_kappa(set.ids[i], set.ids[j], data);
            rec.cosine_distance =
                cosine_distance(set.vector_for(set.ids[i]), set.vector_for(set.ids[j]));
            kappas.push_back(rec.kappa);
            distances.push_back(rec.cosine_distance);
            report.pairs.push_back(std::move(rec));
        }
    }
    if (report.pairs.size() < 3)
        throw std::invalid_argument("need at least 3 annotator pairs with overlap");
    report.pearson_r = pearson(kappas, distances);

    // effective vectors (history rows are projected)
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(set.ids.size()),
                            static_cast<Eigen::Index>(set.dim));
    for (std::size_t i = 0; i < set.ids.size(); ++i)
        vectors.row(static_cast<Eigen::Index>(i)) = set.vector_for(set.ids[i]).transpose();
    const auto assign = kmeans(vectors, kmeans_k, seed);
    for (std::size_t i = 0; i < set.ids.size(); ++i) report.clusters[set.ids[i]] = assign[i];

    // per-cluster correlations where defined
    for (std::size_t c = 0; c < kmeans_k; ++c) {
        std::vector<double> kx, dy;
        for (const auto& rec : report.pairs) {
            if (report.clusters.at(rec.annotator_a) == static_cast<int>(c) &&
                report.clusters.at(rec.annotator_b) == static_cast<int>(c)) {
                kx.push_back(rec.kappa);
                dy.push_back(rec.cosine_distance);
            }
        }
        if (kx.size() >= 3) {
            try {
                report.per_cluster_r[static_cast<int>(c)] = pearson(kx, dy);
            } catch (const std::runtime_error&) {
                // constant within cluster; skip
            }
        }
    }
    return report;
}

std::string to_json(const AgreementReport& r) {
    json j;
    json pairs = json::array();
    for (const auto& p : r.pairs)
        pairs.push_back({{"annotator_a", p.annotator_a},
                         {"annotator_b", p.annotator_b},
                         {"kappa", p.kappa},
                         {"cosine_distance", p.cosine_distance},
                         {"overlap_count", p.overlap_count}});
    j["pairs"] = std::move(pairs);
    j["pearson_r"] = r.pearson_r;
    j["clusters"] = r.clusters;
    json pcr = json::object();
    for (const auto& [c, v] : r.per_cluster_r) pcr[std::to_string(c)] = v;
    j["per_cluster_r"] = std::move(pcr);
    return j.dump(2);
}

AgreementReport agreement_report_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    AgreementReport r;
    for (const auto& jp : j.at("pairs")) {
        PairRecord p;
        p.annotator_a = jp.at("annotator_a").get<std::string>();
        p.annotator_b = jp.at("annotator_b").get<std::string>();
        p.kappa = jp.at("kappa").get<double>();
        p.cosine_distance = jp.at("cosine_distance").get<double>();
        p.overlap_count = jp.at("overlap_count").get<std::size_t>();
        r.pairs.push_back(std::move(p));
    }
    r.pearson_r = j.at("pearson_r").get<double>();
    r.clusters = j.at("clusters").get<std::map<std::string, int>>();
    for (const auto& [key, v] : j.at("per_cluster_r").items())
        r.per_cluster_r[std::stoi(key)] = v.get<double>();
    return r;
}

namespace {

std::string fmt(double v, int precision = 3) {
    std::ostringstream out;
    out.precision(precision);
    out << std::fixed << v;
    return out.str();
}

struct SvgCanvas {
    std::ostringstream body;
    int width = 640, height = 480;
    int margin = 60;

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;  // data ranges

    double px(double x) const {
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin);
    }
    double py(double y) const {
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin);
    }

    void set_range(const std::vector<double>& xs, const std::vector<double>& ys) {
        auto pad = [](double lo, double hi) {
            const double span = hi - lo;
            return span > 0 ? 0.08 * span : 1.0;
        };
        x0 = *std::min_element(xs.begin(), xs.end());
        x1 = *std::max_element(xs.begin(), xs.end());
        y0 = *std::min_element(ys.begin(), ys.end());
        y1 = *std::max_element(ys.begin(), ys.end());
        const double px_ = pad(x0, x1), py_ = pad(y0, y1);
        x0 -= px_; x1 += px_; y0 -= py_; y1 += py_;
    }

    void axes(const std::string& xlabel, const std::string& ylabel,
              const std::string& title) {
        body << "<rect x='" << margin << "' y='" << margin << "' width='"
             << width - 2 * margin << "' height='" << height - 2 * margin
             << "' fill='none' stroke='black'/>\n";
        body << "<text x='" << width / 2 << "' y='" << height - 15
             << "' text-anchor='middle' font-size='14'>" << xlabel << "</text>\n";
        body << "<text x='18' y='" << height / 2
             << "' text-anchor='middle' font-size='14' transform='rotate(-90 18 "
             << height / 2 << ")'>" << ylabel << "</text>\n";
        body << "<text x='" << width / 2
             << "' y='30' text-anchor='middle' font-size='16'>" << title << "</text>\n";
    }

    void point(double x, double y, const std::string& color, const std::string& label = "") {
        body << "<circle cx='" << fmt(px(x), 1) << "' cy='" << fmt(py(y), 1)
             << "' r='5' fill='" << color << "'/>\n";
        if (!label.empty())
            body << "<text x='" << fmt(px(x) + 7, 1) << "' y='" << fmt(py(y) - 7, 1)
                 << "' font-size='12'>" << label << "</text>\n";
    }

    void line(double xa, double ya, double xb, double yb, const std::string& color) {
        body << "<line x1='" << fmt(px(xa), 1) << "' y1='" << fmt(py(ya), 1) << "' x2='"
             << fmt(px(xb), 1) << "' y2='" << fmt(py(yb), 1) << "' stroke='" << color
             << "' stroke-width='1.5'/>\n";
    }

    std::string render() const {
        std::ostringstream out;
        out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
            << height << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
            << body.str() << "</svg>\n";
        return out.str();
    }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << content;
}

const char* kClusterColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::vector<std::string> emit_plots(const AgreementReport& report, const PcaResult& pca,
                                    const std::vector<std::string>& annotator_ids,
                                    const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw std::runtime_error("cannot create output directory: " + out_dir);

    std::vector<std::string> paths;

    // PCA scatter of annotators
    {
        std::vector<double> xs, ys;
        for (int i = 0; i < pca.coordinates.rows(); ++i) {
            xs.push_back(pca.coordinates(i, 0));
            ys.push_back(pca.coordinates.cols() > 1 ? pca.coordinates(i, 1) : 0.0);
        }
        SvgCanvas svg;
        svg.set_range(xs, ys);
        const std::string xlabel =
            "PC1 (" + fmt(100.0 * pca.variance_ratios.at(0), 1) + "%)";
        const std::string ylabel =
            pca.variance_ratios.size() > 1
                ? "PC2 (" + fmt(100.0 * pca.variance_ratios.at(1), 1) + "%)"
                : "PC2";
        svg.axes(xlabel, ylabel, "Annotator embeddings (PCA)");
        for (std::size_t i = 0; i < annotator_ids.size(); ++i) {
            int cluster = 0;
            auto it = report.clusters.find(annotator_ids[i]);
            if (it != report.clusters.end()) cluster = it->second;
            svg.point(xs[i], ys[i], kClusterColors[cluster % 8], annotator_ids[i]);
        }
        const std::string svg_path = out_dir + "/annotators_pca.svg";
        write_file(svg_path, svg.render());
        paths.push_back(svg_path);

        json j;
        j["annotator_ids"] = annotator_ids;
        j["x"] = xs;
        j["y"] = ys;
        j["variance_ratios"] = pca.variance_ratios;
        j["clusters"] = report.clusters;
        const std::string json_path = out_dir + "/annotators_pca.json";
        write_file(json_path, j.dump(2) + "\n");
        paths.push_back(json_path);
    }

    // kappa vs cosine distance with least-squares fit
    {
        std::vector<double> xs, ys;
        for (const auto& p : report.pairs) {
            xs.push_back(p.kappa);
            ys.push_back(p.cosine_distance);
        }
        SvgCanvas svg;
        svg.set_range(xs, ys);
        svg.axes("Cohen's kappa", "Cosine distance",
                 "Agreement vs embedding distance (r = " + fmt(report.pearson_r, 4) + ")");
        for (std::size_t i = 0; i < xs.size(); ++i) svg.point(xs[i], ys[i], "#1f77b4");
        // fitted line
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
        mx /= static_cast<double>(xs.size());
        my /= static_cast<double>(xs.size());
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
        }
        if (sxx > 0) {
            const double slope = sxy / sxx;
            const double icept = my - slope * mx;
            svg.line(svg.x0, icept + slope * svg.x0, svg.x1, icept + slope * svg.x1,
                     "#d62728");
        }
        const std::string svg_path = out_dir + "/kappa_cosine.svg";
        write_file(svg_path, svg.render());
        paths.push_back(svg_path);

        const std::string json_path = out_dir + "/kappa_cosine.json";
        write_file(json_path, to_json(report) + "\n");
        paths.push_back(json_path);
    }
    return paths;
}

}  // namespace anno::analysis
