#pragma once

// Private proof-of-work chain of committed global-model digests, the
// strict-majority vote that decides what gets committed, and the on-disk
// chain file.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcfl/crypto.hpp"
#include "bcfl/errors.hpp"

namespace bcfl {

struct BlockPayload {
  uint32_t round = 0;
  Digest model_digest{};
  std::string model_ref;  // where the model bytes live, relative to the chain file

  friend bool operator==(const BlockPayload&, const BlockPayload&) = default;
};

struct Block {
  uint64_t index = 0;
  Digest prev_hash{};
  uint64_t timestamp = 0;  // logical: round * 1'000'000 + index
  uint32_t difficulty = 0;
  BlockPayload payload;
  uint64_t nonce = 0;
  Digest hash{};

  friend bool operator==(const Block&, const Block&) = default;
};

inline constexpr uint16_t kBlockVersion = 1;
inline constexpr size_t kMaxModelRef = 255;

namespace detail {

inline void put_le(std::vector<uint8_t>& out, uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> b) : b_(b) {}
  uint64_t le(int bytes) {
    need(bytes);
    uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += bytes;
    return v;
  }
  Digest digest() {
    need(32);
    Digest d;
    std::memcpy(d.data(), b_.data() + pos_, 32);
    pos_ += 32;
    return d;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("block record truncated");
  }
  std::span<const uint8_t> b_;
  size_t pos_ = 0;
};

}  // namespace detail

// "BCBK" | version u16 | index u64 | prev 32 | timestamp u64 | difficulty u8 |
// round u32 | digest 32 | ref length u8 | ref | nonce u64       (little-endian)
inline std::vector<uint8_t> block_header_bytes(const Block& b) {
  if (b.payload.model_ref.size() > kMaxModelRef) throw InvalidArgument("model reference too long");
  std::vector<uint8_t> out = {'B', 'C', 'B', 'K'};
  detail::put_le(out, kBlockVersion, 2);
  detail::put_le(out, b.index, 8);
  out.insert(out.end(), b.prev_hash.begin(), b.prev_hash.end());
  detail::put_le(out, b.timestamp, 8);
  detail::put_le(out, b.difficulty, 1);
  detail::put_le(out, b.payload.round, 4);
  out.insert(out.end(), b.payload.model_digest.begin(), b.payload.model_digest.end());
  detail::put_le(out, b.payload.model_ref.size(), 1);
  out.insert(out.end(), b.payload.model_ref.begin(), b.payload.model_ref.end());
  detail::put_le(out, b.nonce, 8);
  return out;
}

inline Digest block_hash(const Block& b) { return sha256(block_header_bytes(b)); }

// `difficulty` leading zero hex digits.
inline bool meets_difficulty(const Digest& h, uint32_t difficulty) {
  if (difficulty > 64) return false;
  for (uint32_t i = 0; i < difficulty; ++i) {
    const uint8_t byte = h[i / 2];
    const uint8_t nibble = i % 2 == 0 ? byte >> 4 : byte & 0x0F;
    if (nibble != 0) return false;
  }
  return true;
}

// Sequential nonce search from 0; the smallest qualifying nonce wins.
inline Block mine(Block b) {
  for (b.nonce = 0;; ++b.nonce) {
    b.hash = block_hash(b);
    if (meets_difficulty(b.hash, b.difficulty)) return b;
  }
}

inline Block genesis_block(uint32_t difficulty) {
  Block b;
  b.difficulty = difficulty;
  b.payload.model_ref = "genesis";
  return mine(b);
}

class Chain {
 public:
  explicit Chain(uint32_t difficulty = 2) : difficulty_(difficulty) {
    if (difficulty > 8) throw InvalidArgument("difficulty above 8 is impractical");
    blocks_.push_back(genesis_block(difficulty));
  }

  // Raw constructor for loaded or tampered data; nothing is checked.
  static Chain from_blocks(uint32_t difficulty, std::vector<Block> blocks) {
    Chain c(0);
    c.difficulty_ = difficulty;
    c.blocks_ = std::move(blocks);
    return c;
  }

  uint32_t difficulty() const { return difficulty_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::vector<Block>& mutable_blocks() { return blocks_; }
  const Block& head() const { return blocks_.back(); }
  size_t size() const { return blocks_.size(); }

  void append(const Block& b) {
    if (b.index != head().index + 1 || b.prev_hash != head().hash) throw ProtocolError("block does not extend the head");
    if (b.difficulty != difficulty_ || b.hash != block_hash(b) || !meets_difficulty(b.hash, difficulty_)) {
      throw ProtocolError("block proof of work invalid");
    }
    blocks_.push_back(b);
  }

  // Latest block committing `round`, if any.
  const Block* find_round(uint32_t round) const {
    for (size_t i = blocks_.size(); i-- > 1;) {
      if (blocks_[i].payload.round == round) return &blocks_[i];
    }
    return nullptr;
  }

 private:
  uint32_t difficulty_;
  std::vector<Block> blocks_;
};

inline Block mine_block(const BlockPayload& payload, const Chain& chain, uint32_t difficulty) {
  if (payload.model_digest == Digest{}) throw InvalidArgument("block payload needs a model digest");
  Block b;
  b.index = chain.head().index + 1;
  b.prev_hash = chain.head().hash;
  b.timestamp = static_cast<uint64_t>(payload.round) * 1'000'000 + b.index;
  b.difficulty = difficulty;
  b.payload = payload;
  return mine(b);
}

inline Block mine_block(const BlockPayload& payload, const Chain& chain) {
  return mine_block(payload, chain, chain.difficulty());
}

// ---------------------------------------------------------------------------
// Consensus.

struct NodeVote {
  uint32_t node_id = 0;
  uint32_t round = 0;
  Digest digest{};
};

struct ConsensusResult {
  bool committed = false;
  std::optional<Digest> digest;
  size_t support = 0;  // votes for the leading digest
};

// Commits the digest held by more than n/2 of the n nodes; anything less
// (including ties and missing votes) aborts.
inline ConsensusResult consensus_commit(std::span<const NodeVote> votes, size_t node_count) {
  if (node_count == 0) throw InvalidArgument("consensus needs at least one node");
  std::set<uint32_t> seen;
  std::map<Digest, size_t> tally;
  for (const auto& v : votes) {
    if (v.node_id >= node_count) throw ProtocolError("vote from unknown node " + std::to_string(v.node_id));
    if (!seen.insert(v.node_id).second) throw ProtocolError("duplicate vote from node " + std::to_string(v.node_id));
    if (v.round != votes.front().round) throw ProtocolError("votes from different rounds");
    ++tally[v.digest];
  }
  ConsensusResult r;
  for (const auto& [d, count] : tally) {
    if (count > r.support) {
      r.support = count;
      if (2 * count > node_count) {
        r.committed = true;
        r.digest = d;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Validation.

struct ChainReport {
  bool ok = true;
  std::optional<size_t> first_bad;
  std::string reason;
};

inline ChainReport validate_chain(const Chain& chain) {
  auto bad = [](size_t i, std::string why) { return ChainReport{false, i, std::move(why)}; };
  const auto& blocks = chain.blocks();
  if (blocks.empty()) return bad(0, "empty chain");
  if (chain.difficulty() > 64) return bad(0, "difficulty out of range");
  if (blocks[0] != genesis_block(chain.difficulty())) return bad(0, "genesis block altered");
  for (size_t i = 1; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    if (b.index != i) return bad(i, "index out of sequence");
    if (b.prev_hash != blocks[i - 1].hash) return bad(i, "previous-hash link broken");
    if (b.difficulty != chain.difficulty()) return bad(i, "difficulty differs from the chain");
    if (b.hash != block_hash(b)) return bad(i, "stored hash does not match contents");
    if (!meets_difficulty(b.hash, b.difficulty)) return bad(i, "proof of work missing");
    if (b.timestamp < blocks[i - 1].timestamp) return bad(i, "timestamp runs backwards");
  }
  return {};
}

inline bool verify_global(std::span<const uint8_t> model_bytes, const Chain& chain, uint32_t round) {
  const Block* b = chain.find_round(round);
  if (!b) throw InvalidArgument("no block for round " + std::to_string(round));
  return sha256(model_bytes) == b->payload.model_digest;
}

// ---------------------------------------------------------------------------
// Chain file: "BCCH" | version u16 | difficulty u8, then one record per
// block: length u32 | header bytes | hash 32.

inline constexpr uint16_t kChainFileVersion = 1;

inline std::vector<uint8_t> chain_file_prefix(uint32_t difficulty) {
  std::vector<uint8_t> out = {'B', 'C', 'C', 'H'};
  detail::put_le(out, kChainFileVersion, 2);
  detail::put_le(out, difficulty, 1);
  return out;
}

inline std::vector<uint8_t> block_record(const Block& b) {
  const auto header = block_header_bytes(b);
  std::vector<uint8_t> out;
  detail::put_le(out, header.size() + 32, 4);
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), b.hash.begin(), b.hash.end());
  return out;
}

inline std::vector<uint8_t> encode_chain(const Chain& chain) {
  auto out = chain_file_prefix(chain.difficulty());
  for (const auto& b : chain.blocks()) {
    const auto rec = block_record(b);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

inline Block parse_block(std::span<const uint8_t> rec) {
  detail::ByteReader r(rec);
  if (r.str(4) != "BCBK") throw FormatError("bad block magic");
  if (r.le(2) != kBlockVersion) throw FormatError("unsupported block version");
  Block b;
  b.index = r.le(8);
  b.prev_hash = r.digest();
  b.timestamp = r.le(8);
  b.difficulty = static_cast<uint32_t>(r.le(1));
  b.payload.round = static_cast<uint32_t>(r.le(4));
  b.payload.model_digest = r.digest();
  b.payload.model_ref = r.str(r.le(1));
  b.nonce = r.le(8);
  b.hash = r.digest();
  if (r.remaining() != 0) throw FormatError("trailing bytes in block record");
  return b;
}

inline Chain decode_chain(std::span<const uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.str(4) != "BCCH") throw FormatError("not a chain file");
  if (r.le(2) != kChainFileVersion) throw FormatError("unsupported chain file version");
  const auto difficulty = static_cast<uint32_t>(r.le(1));
  std::vector<Block> blocks;
  size_t pos = 7;
  while (pos < bytes.size()) {
    detail::ByteReader len(bytes.subspan(pos));
    const size_t n = len.le(4);
    const std::string where = "block " + std::to_string(blocks.size()) + ": ";
    if (pos + 4 + n > bytes.size()) throw FormatError(where + "block record truncated");
    try {
      blocks.push_back(parse_block(bytes.subspan(pos + 4, n)));
    } catch (const FormatError& e) {
      throw FormatError(where + e.what());
    }
    pos += 4 + n;
  }
  return Chain::from_blocks(difficulty, std::move(blocks));
}

inline void save_chain(const Chain& chain, const std::string& path) {
  const auto bytes = encode_chain(chain);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Appends one record to an existing chain file (the single writer path).
inline void append_block_to_file(const Block& b, const std::string& path) {
  const auto rec = block_record(b);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw InvalidArgument("cannot append to " + path);
  out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
}

inline Chain load_chain(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  const std::vector<uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return decode_chain(bytes);
}

inline nlohmann::json block_to_json(const Block& b) {
  return {{"index", b.index},
          {"prev_hash", to_hex(b.prev_hash)},
          {"timestamp", b.timestamp},
          {"difficulty", b.difficulty},
          {"round", b.payload.round},
          {"model_digest", to_hex(b.payload.model_digest)},
          {"model_ref", b.payload.model_ref},
          {"nonce", b.nonce},
          {"hash", to_hex(b.hash)}};
}

// One JSON object per line.
inline std::string dump_chain(const Chain& chain) {
  std::string out;
  for (const auto& b : chain.blocks()) out += block_to_json(b).dump() + "\n";
  return out;
}

}  // namespace bcfl
