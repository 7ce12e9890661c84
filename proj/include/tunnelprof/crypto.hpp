#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "tunnelprof/bytes.hpp"
#include "tunnelprof/cell.hpp"
#include "tunnelprof/errors.hpp"

namespace tunnelprof {

inline constexpr std::size_t kLayerKeyBytes = 32;
inline constexpr std::size_t kLayerNonceBytes = 8;   // explicit counter on the wire
inline constexpr std::size_t kLayerTagBytes = 16;
inline constexpr std::size_t kLayerOverhead = kLayerNonceBytes + kLayerTagBytes;
inline constexpr std::size_t kOnionFrameBytes = 1;   // layers_remaining prefix

using KeyMaterial = std::array<std::uint8_t, kLayerKeyBytes>;

/// One hop's symmetric session key plus its per-direction nonce counters.
/// A (key, nonce) pair is never reused: the send counter strictly increases
/// and the receive side rejects any counter at or below the last accepted
/// one (replays read as authentication failures).
class LayerKey {
 public:
  LayerKey() : LayerKey(KeyMaterial{}) {}
  explicit LayerKey(const KeyMaterial& key) : key_(key) {}

  static LayerKey generate();
  /// key = H(root || salt); both handshake ends derive the same key in
  /// pre-shared-key mode.
  static LayerKey derive(const KeyMaterial& root, ByteView salt);
  /// key = H(shared_secret || pk_initiator || pk_responder) for the
  /// ephemeral X25519 handshake.
  static LayerKey from_agreement(const std::array<std::uint8_t, 32>& shared,
                                 const std::array<std::uint8_t, 32>& pk_initiator,
                                 const std::array<std::uint8_t, 32>& pk_responder);

  /// Seals one layer: [counter8 BE][ciphertext||tag16]. The one-byte layer
  /// count of the enclosing frame goes in as associated data, so a flipped
  /// frame byte fails authentication on peel.
  Bytes seal(ByteView plaintext, std::uint8_t layer_count);

  /// Opens one layer; inverse of seal. Throws AuthenticationError on a bad
  /// tag, wrong associated data, or a stale nonce counter.
  Bytes open(ByteView blob, std::uint8_t layer_count);

  std::uint64_t send_nonce_counter() const { return send_counter_; }
  std::uint64_t recv_nonce_counter() const { return recv_counter_; }
  const KeyMaterial& material() const { return key_; }

 private:
  KeyMaterial key_{};
  std::uint64_t send_counter_ = 0;
  std::uint64_t recv_counter_ = 0;
};

/// Shared root for the pre-shared-key handshake mode, derived from the
/// scenario seed so every node in a deterministic run agrees on it.
KeyMaterial derive_psk_root(std::uint64_t seed);

/// Key-confirmation tag sent back by the responder in psk mode.
KeyMaterial psk_confirm(const KeyMaterial& key);

/// X25519 keypair for the telescoping handshake.
struct EphemeralKeypair {
  std::array<std::uint8_t, 32> public_key{};
  std::array<std::uint8_t, 32> secret_key{};

  static EphemeralKeypair generate();
};

std::array<std::uint8_t, 32> agree(const EphemeralKeypair& local,
                                   const std::array<std::uint8_t, 32>& remote_public);

/// Layered payload: a layer count plus the (possibly multiply-encrypted)
/// body. layers_remaining == 0 means the body is plaintext.
struct OnionPayload {
  std::uint32_t layers_remaining = 0;
  Bytes ciphertext;

  Bytes to_bytes() const;
  static OnionPayload from_bytes(ByteView bytes);  // throws MalformedCellError

  friend bool operator==(const OnionPayload&, const OnionPayload&) = default;
};

/// Largest plaintext that still fits a cell payload after k layers of
/// overhead plus the frame byte.
std::size_t max_onion_plaintext(std::size_t layer_count);

/// Wraps `plaintext` in one AEAD layer per key. keys[0] belongs to hop 1 and
/// is the outermost layer (peeled first); an empty key list just frames the
/// plaintext. Advances each key's send nonce counter. Instrumented as
/// encrypt_str.
OnionPayload onion_encrypt(ByteView plaintext, std::vector<LayerKey*> keys);

/// Removes the outermost layer with `key`. Instrumented as decrypt_str.
/// Throws NoLayerError when layers_remaining == 0 and AuthenticationError
/// when the key is wrong or the ciphertext was tampered with.
OnionPayload peel_layer(const OnionPayload& onion, LayerKey& key);

}  // namespace tunnelprof
