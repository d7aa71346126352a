#include "evcorridor/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace evc {

double mean(const std::vector<double>& x) {
    if (x.empty()) return 0.0;
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("Welch's test needs two samples of size >= 2");
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double va = std::pow(stddev(a), 2) / na, vb = std::pow(stddev(b), 2) / nb;
    const double diff = mean(a) - mean(b);
    WelchResult r;
    if (va + vb == 0.0) {
        // Both samples constant: equal means give no evidence, distinct means are certain.
        r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
        r.dof = na + nb - 2.0;
        r.p = diff == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = diff / std::sqrt(va + vb);
    r.dof = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    boost::math::students_t dist(r.dof);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
    r.p = std::min(1.0, r.p);
    return r;
}

std::vector<double> average_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) { return x[i] < x[j]; });
    std::vector<double> r(n);
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least two points");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    double d2 = 0.0;
    for (size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double n = static_cast<double>(x.size());
    return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

double gini(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    std::vector<double> v = values;
    for (double x : v)
        if (x < 0.0) throw std::invalid_argument("gini: negative value");
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double total = 0.0, weighted = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        total += v[i];
        weighted += static_cast<double>(i + 1) * v[i];
    }
    if (total == 0.0) return 0.0;
    return 2.0 * weighted / (n * total) - (n + 1.0) / n;
}

}  // namespace evc
