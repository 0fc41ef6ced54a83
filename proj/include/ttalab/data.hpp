#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttalab/matrix.hpp"

namespace ttalab {

// Shortest round-tripping decimal form of a double.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("fmt_double: conversion failed");
    return std::string(buf, ptr);
}

// A batch of samples: features plus the possibly noise-corrupted labels the
// evaluation sees (observed) and the generative labels (truth).
struct Batch {
    Matrix x;
    std::vector<int> observed;
    std::vector<int> truth;

    int size() const noexcept { return x.rows(); }
};

struct LabeledSet {
    Matrix x;
    std::vector<int> observed;
    std::vector<int> truth;
    std::string domain;
    int classes = 0;

    int size() const noexcept { return x.rows(); }

    Batch slice(int begin, int end) const {
        require(begin >= 0 && end <= size() && begin <= end, "LabeledSet::slice: bad range");
        Batch b;
        b.x = Matrix(end - begin, x.cols());
        for (int i = begin; i < end; ++i) {
            for (int j = 0; j < x.cols(); ++j) b.x(i - begin, j) = x(i, j);
        }
        b.observed.assign(observed.begin() + begin, observed.begin() + end);
        b.truth.assign(truth.begin() + begin, truth.begin() + end);
        return b;
    }

    LabeledSet take(const std::vector<int>& idx) const {
        LabeledSet out;
        out.x = Matrix(static_cast<int>(idx.size()), x.cols());
        out.observed.reserve(idx.size());
        out.truth.reserve(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const int i = idx[k];
            for (int j = 0; j < x.cols(); ++j) out.x(static_cast<int>(k), j) = x(i, j);
            out.observed.push_back(observed[static_cast<std::size_t>(i)]);
            out.truth.push_back(truth[static_cast<std::size_t>(i)]);
        }
        out.domain = domain;
        out.classes = classes;
        return out;
    }
};

inline LabeledSet concat(const std::vector<LabeledSet>& parts) {
    require(!parts.empty(), "concat: no parts");
    int total = 0;
    const int d = parts.front().x.cols();
    for (const auto& p : parts) {
        require(p.x.cols() == d, "concat: feature width mismatch");
        total += p.size();
    }
    LabeledSet out;
    out.x = Matrix(total, d);
    out.classes = parts.front().classes;
    out.domain = parts.front().domain;
    int r = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < p.size(); ++i, ++r) {
            for (int j = 0; j < d; ++j) out.x(r, j) = p.x(i, j);
        }
        out.observed.insert(out.observed.end(), p.observed.begin(), p.observed.end());
        out.truth.insert(out.truth.end(), p.truth.begin(), p.truth.end());
        out.classes = std::max(out.classes, p.classes);
    }
    return out;
}

// Columnar dataset file: f0..f{d-1},observed,true,domain with a header row.
inline void write_dataset_csv(std::ostream& os, const LabeledSet& s) {
    for (int j = 0; j < s.x.cols(); ++j) os << 'f' << j << ',';
    os << "observed,true,domain\n";
    for (int i = 0; i < s.size(); ++i) {
        for (int j = 0; j < s.x.cols(); ++j) os << fmt_double(s.x(i, j)) << ',';
        os << s.observed[static_cast<std::size_t>(i)] << ','
           << s.truth[static_cast<std::size_t>(i)] << ',' << s.domain << '\n';
    }
}

inline void write_dataset_csv(const std::string& path, const LabeledSet& s) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_dataset_csv(f, s);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline LabeledSet read_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty dataset file: " + path);
    const auto header = split_csv_line(line);
    int d = 0;
    while (d < static_cast<int>(header.size()) && header[static_cast<std::size_t>(d)] == "f" + std::to_string(d)) {
        ++d;
    }
    if (d == 0 || static_cast<int>(header.size()) != d + 3 ||
        header[static_cast<std::size_t>(d)] != "observed" ||
        header[static_cast<std::size_t>(d) + 1] != "true" ||
        header[static_cast<std::size_t>(d) + 2] != "domain") {
        throw std::runtime_error("bad dataset header in: " + path);
    }

    std::vector<double> feats;
    std::vector<int> obs, tru;
    std::string domain;
    int rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (static_cast<int>(cells.size()) != d + 3) {
            throw std::runtime_error("ragged dataset row in: " + path);
        }
        for (int j = 0; j < d; ++j) {
            feats.push_back(std::stod(cells[static_cast<std::size_t>(j)]));
        }
        obs.push_back(std::stoi(cells[static_cast<std::size_t>(d)]));
        tru.push_back(std::stoi(cells[static_cast<std::size_t>(d) + 1]));
        domain = cells[static_cast<std::size_t>(d) + 2];
        ++rows;
    }
    LabeledSet s;
    s.x = Matrix(rows, d);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < d; ++j) s.x(i, j) = feats[static_cast<std::size_t>(i) * d + j];
    }
    s.observed = std::move(obs);
    s.truth = std::move(tru);
    s.domain = domain;
    int mx = -1;
    for (int v : s.observed) mx = std::max(mx, v);
    for (int v : s.truth) mx = std::max(mx, v);
    s.classes = mx + 1;
    if (!s.x.all_finite()) throw std::runtime_error("non-finite features in: " + path);
    return s;
}

}  // namespace ttalab
