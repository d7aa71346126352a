#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evcorridor/env.hpp"

namespace evc {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void put(const T& v) {
        const char* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    template <typename T>
    void put_vec(const std::vector<T>& v) {
        if (!v.empty()) buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
    }
    void put_str(const std::string& s) {
        put<uint32_t>(static_cast<uint32_t>(s.size()));
        buf_.append(s);
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const char* data, size_t size) : p_(data), end_(data + size) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p_, sizeof(T));
        p_ += sizeof(T);
        return v;
    }
    template <typename T>
    std::vector<T> get_vec(size_t n) {
        need(n * sizeof(T));
        std::vector<T> v(n);
        if (n) std::memcpy(v.data(), p_, n * sizeof(T));
        p_ += n * sizeof(T);
        return v;
    }
    std::string get_str() {
        auto n = get<uint32_t>();
        need(n);
        std::string s(p_, n);
        p_ += n;
        return s;
    }
    bool done() const { return p_ == end_; }

private:
    void need(size_t n) const {
        if (static_cast<size_t>(end_ - p_) < n) throw std::runtime_error("truncated record");
    }
    const char* p_;
    const char* end_;
};

nlohmann::json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const nlohmann::json& j);

}  // namespace evc
