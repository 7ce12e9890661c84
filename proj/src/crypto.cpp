#include "tunnelprof/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <mutex>

#include "tunnelprof/profiler.hpp"

namespace tunnelprof {

namespace {

void ensure_sodium() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (sodium_init() < 0) {
      throw Error("libsodium initialization failed");
    }
  });
}

void make_nonce(std::uint64_t counter,
                std::uint8_t out[crypto_aead_chacha20poly1305_ietf_NPUBBYTES]) {
  std::memset(out, 0, crypto_aead_chacha20poly1305_ietf_NPUBBYTES);
  for (int i = 0; i < 8; ++i) {
    out[4 + i] = static_cast<std::uint8_t>(counter >> (8 * (7 - i)));
  }
}

}  // namespace

LayerKey LayerKey::generate() {
  ensure_sodium();
  KeyMaterial key;
  randombytes_buf(key.data(), key.size());
  return LayerKey(key);
}

LayerKey LayerKey::derive(const KeyMaterial& root, ByteView salt) {
  ensure_sodium();
  KeyMaterial key;
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, key.size());
  crypto_generichash_update(&state, root.data(), root.size());
  crypto_generichash_update(&state, salt.data(), salt.size());
  crypto_generichash_final(&state, key.data(), key.size());
  return LayerKey(key);
}

LayerKey LayerKey::from_agreement(const std::array<std::uint8_t, 32>& shared,
                                  const std::array<std::uint8_t, 32>& pk_initiator,
                                  const std::array<std::uint8_t, 32>& pk_responder) {
  ensure_sodium();
  KeyMaterial key;
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, key.size());
  crypto_generichash_update(&state, shared.data(), shared.size());
  crypto_generichash_update(&state, pk_initiator.data(), pk_initiator.size());
  crypto_generichash_update(&state, pk_responder.data(), pk_responder.size());
  crypto_generichash_final(&state, key.data(), key.size());
  return LayerKey(key);
}

Bytes LayerKey::seal(ByteView plaintext, std::uint8_t layer_count) {
  ensure_sodium();
  const std::uint64_t counter = ++send_counter_;
  std::uint8_t nonce[crypto_aead_chacha20poly1305_ietf_NPUBBYTES];
  make_nonce(counter, nonce);

  Bytes out(kLayerNonceBytes + plaintext.size() + kLayerTagBytes);
  for (int i = 0; i < 8; ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(counter >> (8 * (7 - i)));
  }
  unsigned long long clen = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(
      out.data() + kLayerNonceBytes, &clen, plaintext.data(), plaintext.size(),
      &layer_count, 1, nullptr, nonce, key_.data());
  out.resize(kLayerNonceBytes + clen);
  return out;
}

Bytes LayerKey::open(ByteView blob, std::uint8_t layer_count) {
  ensure_sodium();
  if (blob.size() < kLayerOverhead) {
    throw AuthenticationError("layer blob shorter than nonce+tag");
  }
  const std::uint64_t counter = get_u64_be(blob.first(8));
  if (counter <= recv_counter_) {
    throw AuthenticationError("stale nonce counter (replay or reorder)");
  }
  std::uint8_t nonce[crypto_aead_chacha20poly1305_ietf_NPUBBYTES];
  make_nonce(counter, nonce);

  Bytes out(blob.size() - kLayerOverhead);
  unsigned long long mlen = 0;
  const int rc = crypto_aead_chacha20poly1305_ietf_decrypt(
      out.data(), &mlen, nullptr, blob.data() + kLayerNonceBytes,
      blob.size() - kLayerNonceBytes, &layer_count, 1, nonce, key_.data());
  if (rc != 0) {
    throw AuthenticationError("layer authentication failed");
  }
  recv_counter_ = counter;
  out.resize(mlen);
  return out;
}

KeyMaterial derive_psk_root(std::uint64_t seed) {
  ensure_sodium();
  std::uint8_t seed_bytes[8];
  for (int i = 0; i < 8; ++i) {
    seed_bytes[i] = static_cast<std::uint8_t>(seed >> (8 * i));
  }
  static constexpr char kContext[] = "tunnelprof.psk";
  KeyMaterial root;
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, root.size());
  crypto_generichash_update(&state, seed_bytes, sizeof(seed_bytes));
  crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(kContext),
                            sizeof(kContext) - 1);
  crypto_generichash_final(&state, root.data(), root.size());
  return root;
}

KeyMaterial psk_confirm(const KeyMaterial& key) {
  ensure_sodium();
  static constexpr char kContext[] = "tunnelprof.confirm";
  KeyMaterial tag;
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, tag.size());
  crypto_generichash_update(&state, key.data(), key.size());
  crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(kContext),
                            sizeof(kContext) - 1);
  crypto_generichash_final(&state, tag.data(), tag.size());
  return tag;
}

EphemeralKeypair EphemeralKeypair::generate() {
  ensure_sodium();
  EphemeralKeypair kp;
  randombytes_buf(kp.secret_key.data(), kp.secret_key.size());
  crypto_scalarmult_base(kp.public_key.data(), kp.secret_key.data());
  return kp;
}

std::array<std::uint8_t, 32> agree(const EphemeralKeypair& local,
                                   const std::array<std::uint8_t, 32>& remote_public) {
  ensure_sodium();
  std::array<std::uint8_t, 32> shared{};
  if (crypto_scalarmult(shared.data(), local.secret_key.data(), remote_public.data()) != 0) {
    throw AuthenticationError("X25519 agreement failed");
  }
  return shared;
}

Bytes OnionPayload::to_bytes() const {
  Bytes out;
  out.reserve(1 + ciphertext.size());
  out.push_back(static_cast<std::uint8_t>(layers_remaining));
  out.insert(out.end(), ciphertext.begin(), ciphertext.end());
  return out;
}

OnionPayload OnionPayload::from_bytes(ByteView bytes) {
  if (bytes.empty()) {
    throw MalformedCellError("onion payload missing layer count byte");
  }
  OnionPayload onion;
  onion.layers_remaining = bytes[0];
  onion.ciphertext.assign(bytes.begin() + 1, bytes.end());
  return onion;
}

std::size_t max_onion_plaintext(std::size_t layer_count) {
  return kMaxCellPayload - kOnionFrameBytes - layer_count * kLayerOverhead;
}

OnionPayload onion_encrypt(ByteView plaintext, std::vector<LayerKey*> keys) {
  profiler::Scope scope(profiler::Label::encrypt_str);
  const std::size_t k = keys.size();
  if (k > 255) {
    throw OversizeError("at most 255 layers");
  }
  if (plaintext.size() > max_onion_plaintext(k)) {
    throw OversizeError("plaintext too long for " + std::to_string(k) +
                        " layers of overhead");
  }
  OnionPayload onion;
  onion.layers_remaining = static_cast<std::uint32_t>(k);
  onion.ciphertext.assign(plaintext.begin(), plaintext.end());
  // Innermost layer first: keys[k-1] is hop k's, sealed with layer count 1;
  // keys[0] is hop 1's outermost layer, sealed with layer count k.
  for (std::size_t i = k; i-- > 0;) {
    const auto depth = static_cast<std::uint8_t>(k - i);
    onion.ciphertext = keys[i]->seal(onion.ciphertext, depth);
  }
  return onion;
}

OnionPayload peel_layer(const OnionPayload& onion, LayerKey& key) {
  profiler::Scope scope(profiler::Label::decrypt_str);
  if (onion.layers_remaining == 0) {
    throw NoLayerError("payload has no layers left to peel");
  }
  OnionPayload out;
  out.layers_remaining = onion.layers_remaining - 1;
  out.ciphertext = key.open(onion.ciphertext,
                            static_cast<std::uint8_t>(onion.layers_remaining));
  return out;
}

}  // namespace tunnelprof
