#pragma once

#include <vector>

namespace evc {

double mean(const std::vector<double>& x);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(const std::vector<double>& x);

struct WelchResult {
    double t = 0.0;
    double dof = 0.0;
    double p = 1.0;  // two-tailed
};

WelchResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(const std::vector<double>& x);

// 1 - 6 sum d^2 / (n (n^2 - 1)) over average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Mean-absolute-difference Gini; 0 for an all-zero input.
double gini(const std::vector<double>& values);

}  // namespace evc
