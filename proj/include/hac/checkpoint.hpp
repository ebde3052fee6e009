#pragma once

#include "hac/hac_agent.hpp"
#include "hac/hierq_agent.hpp"
#include "hac/nn.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

// Binary layout, all integers and reals little-endian:
//   magic "HACCKPT1" (8 bytes), u32 version, u32 family, u32 k, u64 H
//   u32 record count, then records:
//     net:   u32 tag=1, u32 level, u32 role (0 actor, 1 critic), u32 activation,
//            u32 ndims, u64 dims[ndims], f64 out_center[out], f64 out_scale[out],
//            f64 in_center[in], f64 in_scale[in], u64 nparams, f64 params[nparams]
//     table: u32 tag=2, u32 level, u64 states, u64 goals, u64 actions, f64 alpha,
//            u64 nvalues, f64 values[nvalues]
//   u64 episodes trained

namespace hac {

inline constexpr std::array<char, 8> kCheckpointMagic{'H', 'A', 'C', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public CheckpointError {
 public:
  BadMagicError() : CheckpointError("checkpoint: bad magic") {}
};
class VersionMismatchError : public CheckpointError {
 public:
  explicit VersionMismatchError(std::uint32_t got)
      : CheckpointError("checkpoint: unsupported version " + std::to_string(got)) {}
};
class TruncatedFileError : public CheckpointError {
 public:
  TruncatedFileError() : CheckpointError("checkpoint: truncated file") {}
};
class IncompatibleCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

enum class AgentFamily : std::uint32_t { Hac = 0, HierQ = 1, FlatQ = 2 };

struct NetRecord {
  std::uint32_t level = 0;
  std::uint32_t role = 0;
  std::uint32_t activation = 0;
  std::vector<std::uint64_t> dims;
  Vec out_center, out_scale, in_center, in_scale;
  Vec params;
};

struct TableRecord {
  std::uint32_t level = 0;
  std::uint64_t states = 0, goals = 0, actions = 0;
  double alpha = 0;
  std::vector<double> values;
};

struct CheckpointData {
  AgentFamily family = AgentFamily::Hac;
  std::uint32_t k = 0;
  std::uint64_t H = 0;
  std::vector<NetRecord> nets;
  std::vector<TableRecord> tables;
  std::uint64_t episodes = 0;
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  void raw(const char* p, std::size_t n) { os_.write(p, static_cast<std::streamsize>(n)); }

 private:
  template <class U>
  void le(U v) {
    char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    raw(b, sizeof(U));
  }
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  Vec vec(std::uint64_t n) {
    guard(n);
    Vec v(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = f64();
    return v;
  }
  void raw(char* p, std::size_t n) {
    is_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw TruncatedFileError();
  }
  // Reject sizes larger than what is left so a corrupt count cannot allocate wildly.
  void guard(std::uint64_t n) {
    auto pos = is_.tellg();
    if (pos < 0) return;
    is_.seekg(0, std::ios::end);
    auto end = is_.tellg();
    is_.seekg(pos);
    if (n > static_cast<std::uint64_t>(end - pos) / 8) throw TruncatedFileError();
  }

 private:
  template <class U>
  U le() {
    unsigned char b[sizeof(U)];
    raw(reinterpret_cast<char*>(b), sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const CheckpointData& d) {
  detail::Writer w(os);
  w.raw(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(d.family));
  w.u32(d.k);
  w.u64(d.H);
  w.u32(static_cast<std::uint32_t>(d.nets.size() + d.tables.size()));
  for (const auto& n : d.nets) {
    w.u32(1);
    w.u32(n.level);
    w.u32(n.role);
    w.u32(n.activation);
    w.u32(static_cast<std::uint32_t>(n.dims.size()));
    for (auto x : n.dims) w.u64(x);
    w.vec(n.out_center);
    w.vec(n.out_scale);
    w.vec(n.in_center);
    w.vec(n.in_scale);
    w.u64(static_cast<std::uint64_t>(n.params.size()));
    w.vec(n.params);
  }
  for (const auto& t : d.tables) {
    w.u32(2);
    w.u32(t.level);
    w.u64(t.states);
    w.u64(t.goals);
    w.u64(t.actions);
    w.f64(t.alpha);
    w.u64(t.values.size());
    for (double v : t.values) w.f64(v);
  }
  w.u64(d.episodes);
}

inline CheckpointData read_checkpoint(std::istream& is) {
  detail::Reader r(is);
  std::array<char, 8> magic{};
  try {
    r.raw(magic.data(), magic.size());
  } catch (const TruncatedFileError&) {
    throw BadMagicError();
  }
  if (magic != kCheckpointMagic) throw BadMagicError();
  if (auto v = r.u32(); v != kCheckpointVersion) throw VersionMismatchError(v);
  CheckpointData d;
  auto fam = r.u32();
  if (fam > 2) throw IncompatibleCheckpointError("checkpoint: unknown agent family " + std::to_string(fam));
  d.family = static_cast<AgentFamily>(fam);
  d.k = r.u32();
  d.H = r.u64();
  auto count = r.u32();
  for (std::uint32_t c = 0; c < count; ++c) {
    auto tag = r.u32();
    if (tag == 1) {
      NetRecord n;
      n.level = r.u32();
      n.role = r.u32();
      n.activation = r.u32();
      auto nd = r.u32();
      if (nd < 2 || nd > 64) throw IncompatibleCheckpointError("checkpoint: bad layer count");
      for (std::uint32_t i = 0; i < nd; ++i) n.dims.push_back(r.u64());
      n.out_center = r.vec(n.dims.back());
      n.out_scale = r.vec(n.dims.back());
      n.in_center = r.vec(n.dims.front());
      n.in_scale = r.vec(n.dims.front());
      n.params = r.vec(r.u64());
      d.nets.push_back(std::move(n));
    } else if (tag == 2) {
      TableRecord t;
      t.level = r.u32();
      t.states = r.u64();
      t.goals = r.u64();
      t.actions = r.u64();
      t.alpha = r.f64();
      auto n = r.u64();
      r.guard(n);
      t.values.resize(n);
      for (auto& v : t.values) v = r.f64();
      d.tables.push_back(std::move(t));
    } else {
      throw IncompatibleCheckpointError("checkpoint: unknown record tag " + std::to_string(tag));
    }
  }
  d.episodes = r.u64();
  return d;
}

inline void save_checkpoint(const std::filesystem::path& path, const CheckpointData& d) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_checkpoint(os, d);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return read_checkpoint(is);
}

// ---------------------------------------------------------------------------
// Agent capture / restore. Restore validates everything before mutating.

inline NetRecord capture_net(const DenseNet& net, std::uint32_t level, std::uint32_t role) {
  NetRecord n{level, role, static_cast<std::uint32_t>(net.activation()), {}, net.out_center(), net.out_scale(),
              net.in_center(), net.in_scale(), net.flat_parameters()};
  for (auto x : net.dims()) n.dims.push_back(x);
  return n;
}

inline void check_net(const NetRecord& n, const DenseNet& net) {
  std::vector<std::uint64_t> dims(net.dims().begin(), net.dims().end());
  auto same = [](const Vec& a, const Vec& b) { return a.size() == b.size() && a == b; };
  if (n.dims != dims || n.activation != static_cast<std::uint32_t>(net.activation()) ||
      static_cast<std::size_t>(n.params.size()) != net.parameter_count())
    throw IncompatibleCheckpointError("checkpoint: network shape does not match agent (level " +
                                      std::to_string(n.level) + ")");
  if (!same(n.out_center, net.out_center()) || !same(n.out_scale, net.out_scale()) ||
      !same(n.in_center, net.in_center()) || !same(n.in_scale, net.in_scale()))
    throw IncompatibleCheckpointError("checkpoint: network scaling does not match agent bounds (level " +
                                      std::to_string(n.level) + ")");
}

template <class Env>
CheckpointData capture(const HacAgent<Env>& agent, std::uint64_t episodes = 0) {
  CheckpointData d{AgentFamily::Hac, static_cast<std::uint32_t>(agent.config().k), agent.config().H, {}, {}, episodes};
  for (const auto& lvl : agent.levels()) {
    auto l = static_cast<std::uint32_t>(lvl.level_index);
    d.nets.push_back(capture_net(lvl.actor, l, 0));
    d.nets.push_back(capture_net(lvl.critic, l, 1));
  }
  return d;
}

template <class Env>
void restore(HacAgent<Env>& agent, const CheckpointData& d) {
  auto& levels = agent.levels();
  if (d.family != AgentFamily::Hac || d.k != static_cast<std::uint32_t>(agent.config().k) ||
      d.H != agent.config().H || d.nets.size() != 2 * levels.size() || !d.tables.empty())
    throw IncompatibleCheckpointError("checkpoint: not a matching HAC agent");
  for (std::size_t i = 0; i < d.nets.size(); ++i) {
    const auto& n = d.nets[i];
    if (n.level != i / 2 || n.role != i % 2) throw IncompatibleCheckpointError("checkpoint: network records out of order");
    check_net(n, n.role == 0 ? levels[n.level].actor : levels[n.level].critic);
  }
  for (const auto& n : d.nets) {
    auto& lvl = levels[n.level];
    (n.role == 0 ? lvl.actor : lvl.critic).set_flat_parameters(n.params);
  }
}

inline TableRecord capture_table(const QTable& q) {
  return TableRecord{static_cast<std::uint32_t>(q.level_index()), q.state_count(), q.goal_count(), q.action_count(),
                     q.alpha(), q.values()};
}

inline void restore_tables(std::vector<QTable>& tables, const CheckpointData& d) {
  if (d.tables.size() != tables.size() || !d.nets.empty())
    throw IncompatibleCheckpointError("checkpoint: table count does not match agent");
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const auto& t = d.tables[i];
    const auto& q = tables[i];
    if (t.level != i || t.states != q.state_count() || t.goals != q.goal_count() || t.actions != q.action_count() ||
        t.values.size() != q.values().size())
      throw IncompatibleCheckpointError("checkpoint: table shape does not match agent (level " + std::to_string(i) + ")");
  }
  for (std::size_t i = 0; i < tables.size(); ++i) {
    tables[i].values() = d.tables[i].values;
    tables[i].set_alpha(d.tables[i].alpha);
  }
}

template <class Env>
CheckpointData capture(const HierQAgent<Env>& agent) {
  CheckpointData d{AgentFamily::HierQ, static_cast<std::uint32_t>(agent.config().k), agent.config().H, {}, {},
                   agent.episodes_trained()};
  for (const auto& q : agent.tables()) d.tables.push_back(capture_table(q));
  return d;
}

template <class Env>
void restore(HierQAgent<Env>& agent, const CheckpointData& d) {
  if (d.family != AgentFamily::HierQ || d.k != static_cast<std::uint32_t>(agent.config().k) || d.H != agent.config().H)
    throw IncompatibleCheckpointError("checkpoint: not a matching HierQ agent");
  restore_tables(agent.tables(), d);
  agent.set_episodes_trained(d.episodes);
}

template <class Env>
CheckpointData capture(const FlatQAgent<Env>& agent) {
  CheckpointData d{AgentFamily::FlatQ, 1, agent.config().H, {}, {}, agent.episodes_trained()};
  d.tables.push_back(capture_table(agent.tables()[0]));
  return d;
}

template <class Env>
void restore(FlatQAgent<Env>& agent, const CheckpointData& d) {
  if (d.family != AgentFamily::FlatQ || d.k != 1 || d.H != agent.config().H)
    throw IncompatibleCheckpointError("checkpoint: not a matching flat Q agent");
  restore_tables(agent.tables(), d);
  agent.set_episodes_trained(d.episodes);
}

}  // namespace hac
