#pragma once

// Per-party event logs and the merged transcript.
//
// Round accounting: every message gets a causal depth. A send has depth
// 1 + the largest depth its sender has received so far in the same phase, and a
// functionality call ends at max(both parties' depths) + its round cost. The
// rounds of a phase are the largest depth reached in it. So A->B then a
// dependent B->A counts 2, while two independent crossing sends count 1.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "privinfer/errors.hpp"
#include "privinfer/mpc/share.hpp"

namespace privinfer {

enum class FuncKind { mul, less, b2a, wrap, recip };

inline const char* func_name(FuncKind k) {
  switch (k) {
    case FuncKind::mul: return "F_mul";
    case FuncKind::less: return "F_less";
    case FuncKind::b2a: return "F_B2A";
    case FuncKind::wrap: return "F_wrap";
    case FuncKind::recip: return "F_recip";
  }
  return "?";
}

struct FuncCost {
  double bits_per_element_per_ell = 0;  // total traffic per element, in multiples of ell
  int rounds = 0;
};

// Placeholder costs for the dealer-simulated functionalities; only the HE side
// is asserted exactly, so these are configurable knobs.
struct CostTable {
  FuncCost mul{2, 1};
  FuncCost less{4, 2};
  FuncCost b2a{2, 1};
  FuncCost wrap{4, 2};
  FuncCost recip{8, 4};

  const FuncCost& of(FuncKind k) const {
    switch (k) {
      case FuncKind::mul: return mul;
      case FuncKind::less: return less;
      case FuncKind::b2a: return b2a;
      case FuncKind::wrap: return wrap;
      case FuncKind::recip: return recip;
    }
    throw std::logic_error("unknown functionality");
  }
  void validate() const {
    for (auto k : {FuncKind::mul, FuncKind::less, FuncKind::b2a, FuncKind::wrap, FuncKind::recip}) {
      PRIVINFER_ENFORCE(of(k).bits_per_element_per_ell >= 0 && of(k).rounds >= 0, "costs must be nonnegative");
    }
  }
};

enum class CtRole { none, input, output, setup };

struct Event {
  enum class Kind { send, recv, func, offline } kind = Kind::send;
  std::string phase;
  std::uint16_t tag = 0;
  std::uint64_t bytes = 0;
  std::uint64_t digest = 0;  // FNV-1a of the framed bytes
  std::uint64_t ciphertexts = 0;
  CtRole role = CtRole::none;
  FuncKind func = FuncKind::mul;
  std::string label;
  std::uint64_t elements = 0;
  int ell = 0;
};

struct PartyLog {
  Party party = Party::client;
  std::string phase = "online";
  std::vector<Event> events;
};

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 1099511628211ull;
  }
  return h;
}

struct MessageRecord {
  Party from = Party::client;
  std::string phase;
  std::uint16_t tag = 0;
  std::uint64_t bytes = 0;
  std::uint64_t digest = 0;
  std::uint64_t ciphertexts = 0;
  int depth = 0;

  friend bool operator==(const MessageRecord&, const MessageRecord&) = default;
};

struct PhaseStats {
  std::uint64_t bytes_client_to_server = 0;
  std::uint64_t bytes_server_to_client = 0;
  std::uint64_t offline_bytes = 0;
  std::uint64_t func_bytes = 0;
  std::uint64_t messages = 0;
  int rounds = 0;

  std::uint64_t channel_bytes() const { return bytes_client_to_server + bytes_server_to_client; }
};

struct Transcript {
  std::vector<MessageRecord> messages;
  std::map<std::string, PhaseStats> phases;
  std::uint64_t ct_in = 0;     // encrypted inputs sent to the evaluator
  std::uint64_t ct_out = 0;    // encrypted results sent back for decryption
  std::uint64_t ct_setup = 0;  // input-independent ciphertexts (weight store)
  std::map<std::string, std::uint64_t> func_calls;     // keyed by label
  std::map<std::string, std::uint64_t> func_elements;  // keyed by label

  int rounds(const std::string& phase = "online") const {
    auto it = phases.find(phase);
    return it == phases.end() ? 0 : it->second.rounds;
  }
  std::uint64_t bytes(const std::string& phase = "online") const {
    auto it = phases.find(phase);
    return it == phases.end() ? 0 : it->second.channel_bytes();
  }
  std::uint64_t calls(const std::string& label) const {
    auto it = func_calls.find(label);
    return it == func_calls.end() ? 0 : it->second;
  }
  std::uint64_t ciphertexts_sent(Party from) const {
    std::uint64_t total = 0;
    for (const auto& m : messages)
      if (m.from == from) total += m.ciphertexts;
    return total;
  }
};

// Replays both logs in causal order. Message i on a direction pairs the i-th
// send with the i-th recv; the i-th functionality call of one party pairs with
// the other's i-th call.
inline Transcript merge_logs(const PartyLog& client, const PartyLog& server, const CostTable& costs) {
  const PartyLog* logs[2] = {&client, &server};
  PRIVINFER_ENFORCE(client.party == Party::client && server.party == Party::server, "logs in wrong order");
  Transcript t;
  std::size_t idx[2] = {0, 0};
  std::map<std::string, int> known[2];
  std::deque<int> in_flight[2];  // depths of messages sent by party p, not yet received

  auto bump = [&](const std::string& phase, int depth) {
    auto& st = t.phases[phase];
    st.rounds = std::max(st.rounds, depth);
  };

  for (;;) {
    bool progressed = false;
    for (int p = 0; p < 2; ++p) {
      const auto& ev = logs[p]->events;
      while (idx[p] < ev.size()) {
        const Event& e = ev[idx[p]];
        if (e.kind == Event::Kind::send) {
          const int d = known[p][e.phase] + 1;
          in_flight[p].push_back(d);
          MessageRecord m{static_cast<Party>(p), e.phase, e.tag, e.bytes, e.digest, e.ciphertexts, d};
          auto& st = t.phases[e.phase];
          (p == 0 ? st.bytes_client_to_server : st.bytes_server_to_client) += e.bytes;
          ++st.messages;
          if (e.role == CtRole::input) t.ct_in += e.ciphertexts;
          if (e.role == CtRole::output) t.ct_out += e.ciphertexts;
          if (e.role == CtRole::setup) t.ct_setup += e.ciphertexts;
          t.messages.push_back(std::move(m));
          bump(e.phase, d);
        } else if (e.kind == Event::Kind::recv) {
          auto& q = in_flight[1 - p];
          if (q.empty()) break;
          known[p][e.phase] = std::max(known[p][e.phase], q.front());
          q.pop_front();
        } else if (e.kind == Event::Kind::offline) {
          // Input-independent transfer charged to its phase as one round.
          auto& st = t.phases[e.phase];
          st.offline_bytes += e.bytes;
          if (e.role == CtRole::setup) t.ct_setup += e.ciphertexts;
          known[p][e.phase] = std::max(known[p][e.phase], 1);
          bump(e.phase, 1);
        } else {
          const int o = 1 - p;
          const auto& oev = logs[o]->events;
          if (idx[o] >= oev.size() || oev[idx[o]].kind != Event::Kind::func) break;
          const Event& f = oev[idx[o]];
          if (f.func != e.func || f.elements != e.elements) {
            throw ProtocolError("transcript: parties disagree on a functionality call");
          }
          const FuncCost& cost = costs.of(e.func);
          const int d = std::max(known[p][e.phase], known[o][f.phase]) + cost.rounds;
          known[p][e.phase] = d;
          known[o][f.phase] = d;
          auto& st = t.phases[e.phase];
          st.func_bytes += static_cast<std::uint64_t>(cost.bits_per_element_per_ell * e.ell * e.elements / 8.0);
          t.func_calls[e.label] += 1;
          t.func_elements[e.label] += e.elements;
          bump(e.phase, d);
          ++idx[o];
        }
        ++idx[p];
        progressed = true;
      }
    }
    if (idx[0] == logs[0]->events.size() && idx[1] == logs[1]->events.size()) break;
    if (!progressed) throw ProtocolError("transcript: logs do not pair up (unmatched send/recv or call)");
  }
  return t;
}

}  // namespace privinfer
