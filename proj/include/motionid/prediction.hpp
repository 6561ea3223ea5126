#pragma once

#include <string>
#include <vector>

// Session-level prediction scores: one row per test session, one column per
// enrolled participant class, entries forming a probability distribution.

namespace motionid {

struct PredictionRow {
    std::string participant;
    int dataset = 1;
    int week = 1;
    std::string section;
    int true_class = -1;
};

struct PredictionMatrix {
    std::vector<std::string> classes;
    std::vector<PredictionRow> rows;
    std::vector<double> scores;  // rows x classes, row major

    size_t n_rows() const { return rows.size(); }
    size_t n_classes() const { return classes.size(); }
    double at(size_t r, size_t c) const { return scores[r * classes.size() + c]; }

    // Entries non-negative, rows summing to 1 within 1e-9, labels in range.
    void check_valid() const;
};

}  // namespace motionid
