#include "tunnelprof/transport.hpp"

#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace tunnelprof {

namespace {
using SteadyClock = std::chrono::steady_clock;

std::uint64_t link_key(std::uint64_t src_packed, std::uint64_t dst_packed) {
  // 48-bit packed addresses; fold into one key.
  return src_packed * 0x9E3779B97F4A7C15ull ^ dst_packed;
}
}  // namespace

struct InProcNetwork::Mailbox {
  struct Item {
    AddressBytes source;
    Bytes payload;
    SteadyClock::time_point eligible_at;
  };

  mutable std::mutex mutex;
  std::condition_variable available;
  std::deque<Item> queue;
  std::unordered_map<std::uint64_t, std::uint64_t> delivered_by_source;
  std::uint64_t delivered_total = 0;
};

class InProcEndpoint : public Endpoint {
 public:
  InProcEndpoint(InProcNetwork& net, Address address,
                 std::shared_ptr<InProcNetwork::Mailbox> box)
      : net_(net), address_(address), box_(std::move(box)) {}

  ~InProcEndpoint() override { net_.unbind(address_.packed()); }

  const Address& address() const override { return address_; }

  void send(const AddressBytes& dest, ByteView payload) override {
    if (payload.size() > kMaxDatagramBytes) {
      throw OversizeError("datagram exceeds 65507 bytes");
    }
    net_.route(encode_plain(address_), dest, payload);
  }

  std::optional<Datagram> try_recv() override {
    std::lock_guard lock(box_->mutex);
    return take_eligible(SteadyClock::now());
  }

  std::optional<Datagram> recv_wait(std::chrono::microseconds timeout) override {
    const auto deadline = SteadyClock::now() + timeout;
    std::unique_lock lock(box_->mutex);
    for (;;) {
      const auto now = SteadyClock::now();
      if (auto d = take_eligible(now)) {
        return d;
      }
      // Wake early when the head is queued but not yet eligible.
      auto until = deadline;
      for (const auto& item : box_->queue) {
        until = std::min(until, item.eligible_at);
      }
      if (now >= deadline) {
        return std::nullopt;
      }
      box_->available.wait_until(lock, std::max(until, now + std::chrono::microseconds(1)));
      if (SteadyClock::now() >= deadline && box_->queue.empty()) {
        return std::nullopt;
      }
    }
  }

  std::unordered_map<std::uint64_t, std::uint64_t> delivered_by_source() const override {
    std::lock_guard lock(box_->mutex);
    return box_->delivered_by_source;
  }

  std::uint64_t delivered_total() const override {
    std::lock_guard lock(box_->mutex);
    return box_->delivered_total;
  }

 private:
  static AddressBytes encode_plain(const Address& a) {
    return AddressBytes{a.host[0], a.host[1], a.host[2], a.host[3],
                        static_cast<std::uint8_t>(a.port >> 8),
                        static_cast<std::uint8_t>(a.port)};
  }

  // Earliest eligible item in push order; per-link FIFO holds because a
  // link's latency is constant, so eligibility is monotone within a link.
  std::optional<Datagram> take_eligible(SteadyClock::time_point now) {
    for (auto it = box_->queue.begin(); it != box_->queue.end(); ++it) {
      if (it->eligible_at <= now) {
        Datagram d{it->source, std::move(it->payload)};
        box_->delivered_by_source[packed_address_bytes(d.source)] += 1;
        box_->delivered_total += 1;
        box_->queue.erase(it);
        return d;
      }
    }
    return std::nullopt;
  }

  InProcNetwork& net_;
  Address address_;
  std::shared_ptr<InProcNetwork::Mailbox> box_;
};

std::unique_ptr<Endpoint> InProcNetwork::bind(const Address& address) {
  auto box = std::make_shared<Mailbox>();
  {
    std::lock_guard lock(mutex_);
    auto [it, inserted] = mailboxes_.emplace(address.packed(), box);
    if (!inserted) {
      throw BindError("address already bound: " + address.to_string());
    }
  }
  return std::make_unique<InProcEndpoint>(*this, address, std::move(box));
}

void InProcNetwork::unbind(std::uint64_t key) {
  std::lock_guard lock(mutex_);
  mailboxes_.erase(key);
}

void InProcNetwork::set_link_latency(const Address& src, const Address& dst,
                                     std::chrono::microseconds latency) {
  std::lock_guard lock(mutex_);
  link_latency_[link_key(src.packed(), dst.packed())] = latency;
}

void InProcNetwork::route(const AddressBytes& src, const AddressBytes& dest, ByteView payload) {
  std::shared_ptr<Mailbox> box;
  auto latency = default_latency_;
  {
    std::lock_guard lock(mutex_);
    auto it = mailboxes_.find(packed_address_bytes(dest));
    if (it == mailboxes_.end()) {
      dropped_.fetch_add(1, std::memory_order_relaxed);
      return;
    }
    box = it->second;
    auto lat = link_latency_.find(link_key(packed_address_bytes(src), packed_address_bytes(dest)));
    if (lat != link_latency_.end()) {
      latency = lat->second;
    }
  }
  {
    std::lock_guard lock(box->mutex);
    box->queue.push_back({src, Bytes(payload.begin(), payload.end()),
                          SteadyClock::now() + latency});
  }
  box->available.notify_one();
}

bool InProcNetwork::pending() const {
  std::lock_guard lock(mutex_);
  for (const auto& [key, box] : mailboxes_) {
    std::lock_guard box_lock(box->mutex);
    if (!box->queue.empty()) {
      return true;
    }
  }
  return false;
}

class UdpEndpoint : public Endpoint {
 public:
  UdpEndpoint(int fd, Address address) : fd_(fd), address_(address) {}

  ~UdpEndpoint() override { ::close(fd_); }

  const Address& address() const override { return address_; }

  void send(const AddressBytes& dest, ByteView payload) override {
    if (payload.size() > kMaxDatagramBytes) {
      throw OversizeError("datagram exceeds 65507 bytes");
    }
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    std::memcpy(&sa.sin_addr.s_addr, dest.data(), 4);
    sa.sin_port = htons(static_cast<std::uint16_t>((dest[4] << 8) | dest[5]));
    ::sendto(fd_, payload.data(), payload.size(), 0,
             reinterpret_cast<const sockaddr*>(&sa), sizeof(sa));
  }

  std::optional<Datagram> try_recv() override { return do_recv(0); }

  std::optional<Datagram> recv_wait(std::chrono::microseconds timeout) override {
    const int ms = static_cast<int>(
        std::chrono::duration_cast<std::chrono::milliseconds>(timeout).count());
    return do_recv(std::max(ms, 1));
  }

  std::unordered_map<std::uint64_t, std::uint64_t> delivered_by_source() const override {
    std::lock_guard lock(mutex_);
    return delivered_by_source_;
  }

  std::uint64_t delivered_total() const override {
    std::lock_guard lock(mutex_);
    return delivered_total_;
  }

 private:
  std::optional<Datagram> do_recv(int poll_ms) {
    if (poll_ms > 0) {
      pollfd pfd{fd_, POLLIN, 0};
      if (::poll(&pfd, 1, poll_ms) <= 0) {
        return std::nullopt;
      }
    }
    Bytes buf(kMaxDatagramBytes);
    sockaddr_in sa{};
    socklen_t salen = sizeof(sa);
    const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), MSG_DONTWAIT,
                                 reinterpret_cast<sockaddr*>(&sa), &salen);
    if (n < 0) {
      return std::nullopt;
    }
    buf.resize(static_cast<std::size_t>(n));
    Datagram d;
    std::memcpy(d.source.data(), &sa.sin_addr.s_addr, 4);
    const std::uint16_t port = ntohs(sa.sin_port);
    d.source[4] = static_cast<std::uint8_t>(port >> 8);
    d.source[5] = static_cast<std::uint8_t>(port);
    d.payload = std::move(buf);
    {
      std::lock_guard lock(mutex_);
      delivered_by_source_[packed_address_bytes(d.source)] += 1;
      delivered_total_ += 1;
    }
    return d;
  }

  int fd_;
  Address address_;
  mutable std::mutex mutex_;
  std::unordered_map<std::uint64_t, std::uint64_t> delivered_by_source_;
  std::uint64_t delivered_total_ = 0;
};

std::unique_ptr<Endpoint> UdpNetwork::bind(const Address& address) {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) {
    throw BindError("socket() failed: " + std::string(std::strerror(errno)));
  }
  const int rcvbuf = 4 * 1024 * 1024;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof(rcvbuf));

  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  std::memcpy(&sa.sin_addr.s_addr, address.host.data(), 4);
  sa.sin_port = htons(address.port);
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0) {
    const int err = errno;
    ::close(fd);
    throw BindError("bind(" + address.to_string() + ") failed: " + std::strerror(err));
  }

  // Port 0 asks the kernel for an ephemeral port; read back what we got.
  Address bound = address;
  socklen_t salen = sizeof(sa);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &salen) == 0) {
    bound.port = ntohs(sa.sin_port);
  }
  return std::make_unique<UdpEndpoint>(fd, bound);
}

}  // namespace tunnelprof
