#pragma once

// Binary protocol for serving an Environment over a byte stream.
//
// Connection opens with a 9-byte handshake from the server:
//
//   "SCP1" | height:u16 | width:u16 | action_count:u8
//
// after which the client sends requests and the server answers each reset or
// step with exactly one response:
//
//   0x01 seed:u64      reset
//   0x02 action:u8     step
//   0x03               close (no response)
//
//   response: reward:f64 | status:u8 | frame:height*width bytes
//
// status is 0 (running) or 1 (terminated). A failed request is answered with
// status 0xFF followed by a u16 message length and the message bytes, and
// the server then closes. Integers and the IEEE-754 reward are little-endian;
// there is no padding anywhere. Frames are 8-bit grayscale, row-major.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <sys/types.h>

#include "scope/environment.hpp"

namespace scope::proto {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'S', 'C', 'P', '1'};
inline constexpr std::size_t kHandshakeSize = 9;
inline constexpr std::size_t kMaxFramePixels = std::size_t{1} << 24;

enum class Opcode : std::uint8_t { Reset = 0x01, Step = 0x02, Close = 0x03 };

inline constexpr std::uint8_t kStatusRunning = 0;
inline constexpr std::uint8_t kStatusTerminated = 1;
inline constexpr std::uint8_t kStatusError = 0xFF;

struct Handshake {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t action_count = 0;

  friend bool operator==(const Handshake&, const Handshake&) = default;
};

std::array<std::uint8_t, kHandshakeSize> encode_handshake(const Handshake& h);

/// Throws ProtocolError on bad magic, zero dimensions, zero actions or a
/// frame larger than kMaxFramePixels.
Handshake decode_handshake(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Transports

/// Blocking, bidirectional byte stream.
class ByteStream {
 public:
  virtual ~ByteStream() = default;

  /// Writes every byte or throws TransportError.
  virtual void write_all(std::span<const std::uint8_t> bytes) = 0;

  /// Reads up to bytes.size() bytes; returns 0 only at end of stream.
  virtual std::size_t read_some(std::span<std::uint8_t> bytes) = 0;

  /// Fills `bytes` completely or throws TransportError.
  void read_exact(std::span<std::uint8_t> bytes);
};

/// A stream over POSIX descriptors (pipes or sockets). Owned descriptors are
/// closed on destruction.
class FdStream final : public ByteStream {
 public:
  FdStream(int read_fd, int write_fd, bool owns);
  ~FdStream() override;

  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  void write_all(std::span<const std::uint8_t> bytes) override;
  std::size_t read_some(std::span<std::uint8_t> bytes) override;

  /// Half-closes the write side so the peer sees end of stream.
  void close_write();

 private:
  int read_fd_;
  int write_fd_;
  bool owns_;
};

/// Two connected in-process endpoints (a socketpair).
std::pair<std::unique_ptr<FdStream>, std::unique_ptr<FdStream>> stream_pair();

/// TCP client connection to "host:port".
std::unique_ptr<FdStream> tcp_connect(const std::string& address);

/// Listening TCP socket. Port 0 picks a free port.
class TcpListener {
 public:
  explicit TcpListener(const std::string& address);
  ~TcpListener();

  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<FdStream> accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// A child process whose stdin/stdout form the stream. The child is reaped on
/// destruction after its stdin is closed.
class ChildProcess final : public ByteStream {
 public:
  /// Runs `command` through /bin/sh -c.
  explicit ChildProcess(const std::string& command);
  ~ChildProcess() override;

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  void write_all(std::span<const std::uint8_t> bytes) override;
  std::size_t read_some(std::span<std::uint8_t> bytes) override;

  pid_t pid() const { return pid_; }
  /// Closes the pipes and waits; returns the exit status as from waitpid.
  int wait();

 private:
  pid_t pid_ = -1;
  std::unique_ptr<FdStream> stream_;
  bool reaped_ = false;
  int status_ = 0;
};

// ---------------------------------------------------------------------------
// Client and server

/// Environment whose reset/step are answered by a remote server. Not safe for
/// concurrent use; open one connection per evaluator.
class RemoteEnvironment final : public Environment {
 public:
  ~RemoteEnvironment() override;

  Frame reset(std::uint64_t seed) override;
  StepResult step(int action) override;

  int height() const override { return handshake_.height; }
  int width() const override { return handshake_.width; }
  int action_count() const override { return handshake_.action_count; }

  const Handshake& handshake() const { return handshake_; }

  /// Sends the close opcode. Idempotent; also run by the destructor.
  void close();

 private:
  friend std::unique_ptr<RemoteEnvironment> connect(std::unique_ptr<ByteStream> transport);
  RemoteEnvironment(std::unique_ptr<ByteStream> transport, Handshake handshake);

  StepResult exchange(std::span<const std::uint8_t> request);

  std::unique_ptr<ByteStream> transport_;
  Handshake handshake_;
  std::vector<std::uint8_t> frame_buffer_;
  bool usable_ = true;
};

/// Reads the server handshake and returns the connected environment.
std::unique_ptr<RemoteEnvironment> connect(std::unique_ptr<ByteStream> transport);

/// Answers requests until the client sends close or disconnects. Protocol
/// violations and environment errors are reported to the client, then the
/// function returns. The environment is released on return.
void serve(std::unique_ptr<Environment> env, ByteStream& transport);

/// Throws ConfigError unless `address` has one of the forms accepted by
/// open_transport.
void validate_address(const std::string& address);

/// Builds a transport from "tcp:HOST:PORT", "HOST:PORT" or "exec:COMMAND".
std::unique_ptr<ByteStream> open_transport(const std::string& address);

}  // namespace scope::proto
