#pragma once

#include <fstream>
#include <functional>
#include <future>
#include <sstream>
#include <string>
#include <vector>

#include "refinelab/task.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Dataset file: one instance per line, `x0-tokens|x1-tokens|clue-bits` with
// space-separated integers and a 0/1 clue string. The first line is a header
// of key=value fields (task kind, d, vocabulary size, generator seed, task
// parameters). UTF-8, LF line endings.

struct Dataset {
    TaskSpec task;
    uint64_t seed = 0;
    std::vector<PuzzleInstance> instances;

    size_t size() const { return instances.size(); }
};

namespace detail {

inline std::string format_header(const TaskSpec& task, uint64_t seed) {
    std::ostringstream os;
    os << "#";
    for (const auto& [k, v] : task.header_fields(seed)) os << " " << k << "=" << v;
    return os.str();
}

inline std::map<std::string, std::string> parse_header(const std::string& line) {
    if (line.empty() || line[0] != '#') throw io_error("dataset header line missing");
    std::map<std::string, std::string> fields;
    std::istringstream is(line.substr(1));
    std::string kv;
    while (is >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw io_error("malformed dataset header field: " + kv);
        fields[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return fields;
}

inline int header_int(const std::map<std::string, std::string>& f, const std::string& key) {
    auto it = f.find(key);
    if (it == f.end()) throw io_error("dataset header missing field: " + key);
    return std::stoi(it->second);
}

}  // namespace detail

inline TaskSpec task_from_header(const std::map<std::string, std::string>& f) {
    auto it = f.find("task");
    if (it == f.end()) throw io_error("dataset header missing task kind");
    TaskSpec task;
    if (it->second == "countdown") {
        task.kind = TaskKind::countdown;
        task.countdown.k = detail::header_int(f, "k");
        task.countdown.operand_max = detail::header_int(f, "operand_max");
        task.countdown.result_max = detail::header_int(f, "result_max");
        task.countdown.target_min = detail::header_int(f, "target_min");
        task.countdown.target_max = detail::header_int(f, "target_max");
    } else if (it->second == "mini-sudoku" || it->second == "sudoku") {
        task.kind = TaskKind::sudoku;
        task.n = detail::header_int(f, "n");
        task.clue_min = detail::header_int(f, "clue_min");
        task.clue_max = detail::header_int(f, "clue_max");
    } else {
        throw io_error("unknown task kind in dataset header: " + it->second);
    }
    return task;
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
    if (!out) throw io_error("cannot open for writing: " + path);
    out << detail::format_header(ds.task, ds.seed) << "\n";
    for (const PuzzleInstance& inst : ds.instances) {
        for (size_t i = 0; i < inst.x0.size(); ++i) out << (i ? " " : "") << inst.x0[i];
        out << "|";
        for (size_t i = 0; i < inst.x1.size(); ++i) out << (i ? " " : "") << inst.x1[i];
        out << "|";
        for (uint8_t c : inst.clues) out << (c ? '1' : '0');
        out << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

inline std::vector<Token> parse_token_field(const std::string& field, int expect_d) {
    std::vector<Token> toks;
    toks.reserve(expect_d);
    std::istringstream is(field);
    long v;
    while (is >> v) toks.push_back(Token(v));
    if (int(toks.size()) != expect_d)
        throw io_error("dataset line has " + std::to_string(toks.size()) + " tokens, expected " +
                       std::to_string(expect_d));
    return toks;
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty dataset file: " + path);
    auto fields = detail::parse_header(line);

    Dataset ds;
    ds.task = task_from_header(fields);
    ds.seed = std::stoull(fields.at("seed"));
    const int d = ds.task.d();
    if (detail::header_int(fields, "d") != d) throw io_error("dataset header d mismatch");
    if (detail::header_int(fields, "vocab") != ds.task.vocab().size)
        throw io_error("dataset header vocab mismatch");
    const Vocabulary vocab = ds.task.vocab();

    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto p1 = line.find('|');
        auto p2 = line.find('|', p1 == std::string::npos ? 0 : p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw io_error("malformed dataset line " + std::to_string(lineno));
        PuzzleInstance inst;
        inst.x0 = parse_token_field(line.substr(0, p1), d);
        inst.x1 = parse_token_field(line.substr(p1 + 1, p2 - p1 - 1), d);
        const std::string bits = line.substr(p2 + 1);
        if (int(bits.size()) != d)
            throw io_error("dataset clue string has wrong length at line " +
                           std::to_string(lineno));
        inst.clues.resize(d);
        for (int i = 0; i < d; ++i) {
            if (bits[i] != '0' && bits[i] != '1')
                throw io_error("dataset clue string must be 0/1 at line " +
                               std::to_string(lineno));
            inst.clues[i] = bits[i] == '1';
        }
        for (int i = 0; i < d; ++i) {
            if (!vocab.valid_token(inst.x0[i]) || !vocab.valid_token(inst.x1[i]))
                throw io_error("dataset token out of range at line " + std::to_string(lineno));
            if (inst.clues[i] && inst.x0[i] == vocab.mask_id)
                throw io_error("clue position holds mask at line " + std::to_string(lineno));
            if (inst.clues[i] && inst.x0[i] != inst.x1[i])
                throw io_error("clue mismatch between x0 and x1 at line " + std::to_string(lineno));
        }
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

// Deterministic generation of `count` instances of the requested split.
// Instance i of the stream uses seed derive_seed(seed, i); instances whose
// hash bucket does not match the split are skipped.
inline Dataset generate_dataset(const TaskSpec& task, uint64_t seed, size_t count, Split split,
                                const std::function<void(size_t)>& progress = nullptr) {
    Dataset ds;
    ds.task = task;
    ds.seed = seed;
    ds.instances.reserve(count);
    for (uint64_t idx = 0; ds.instances.size() < count; ++idx) {
        PuzzleInstance inst = task.generate(derive_seed(seed, idx));
        if (!in_split(task.instance_hash(inst), split)) continue;
        ds.instances.push_back(std::move(inst));
        if (progress && ds.instances.size() % 5000 == 0) progress(ds.instances.size());
    }
    return ds;
}

// Worker-pool variant: instance i still comes from derive_seed(seed, i), so
// the output is byte-identical to the sequential path for any job count.
inline Dataset generate_dataset_parallel(const TaskSpec& task, uint64_t seed, size_t count,
                                         Split split, int jobs,
                                         const std::function<void(size_t)>& progress = nullptr) {
    if (jobs <= 1) return generate_dataset(task, seed, count, split, progress);
    Dataset ds;
    ds.task = task;
    ds.seed = seed;
    ds.instances.reserve(count);

    const size_t chunk = 2048;
    uint64_t base = 0;
    std::vector<PuzzleInstance> block(chunk);
    while (ds.instances.size() < count) {
        std::vector<std::future<void>> futs;
        const size_t per = (chunk + jobs - 1) / jobs;
        for (int j = 0; j < jobs; ++j) {
            const size_t b = j * per, e = std::min(chunk, (j + 1) * per);
            if (b < e)
                futs.push_back(std::async(std::launch::async, [&, b, e] {
                    for (size_t i = b; i < e; ++i)
                        block[i] = task.generate(derive_seed(seed, base + i));
                }));
        }
        for (auto& f : futs) f.get();
        for (size_t i = 0; i < chunk && ds.instances.size() < count; ++i) {
            if (!in_split(task.instance_hash(block[i]), split)) continue;
            ds.instances.push_back(std::move(block[i]));
            if (progress && ds.instances.size() % 5000 == 0) progress(ds.instances.size());
        }
        base += chunk;
    }
    return ds;
}

// FNV-1a over the raw bytes of a file; used to fingerprint datasets in run
// directories.
inline uint64_t file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open for hashing: " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= uint8_t(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

}  // namespace refinelab
