//! OSC datagram encoding and a non-blocking UDP emitter.
//!
//! Every track update is one fixed 40-byte OSC message: address
//! `/szloca/track`, type tags `,ifff`, then the id as big-endian int32 and
//! x, y, z as big-endian float32. Both text fields are NUL-padded to the
//! next multiple of four bytes, as OSC requires.

use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crossbeam::queue::ArrayQueue;
use thiserror::Error;

pub const OSC_ADDRESS: &str = "/szloca/track";
pub const OSC_MESSAGE_LEN: usize = 40;

#[derive(Debug, Error)]
pub enum OscError {
    #[error("non-finite coordinate cannot be emitted")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encodes one track update. Fails only on non-finite coordinates.
pub fn encode_osc_track(id: i32, pos: (f32, f32, f32)) -> Result<[u8; OSC_MESSAGE_LEN], OscError> {
    let (x, y, z) = pos;
    if !(x.is_finite() && y.is_finite() && z.is_finite()) {
        return Err(OscError::NonFinite);
    }
    let mut buf = [0u8; OSC_MESSAGE_LEN];
    buf[..OSC_ADDRESS.len()].copy_from_slice(OSC_ADDRESS.as_bytes());
    // Bytes 13..16 stay NUL: terminator plus padding to 16.
    buf[16..21].copy_from_slice(b",ifff");
    // Bytes 21..24 stay NUL: terminator plus padding to 24.
    buf[24..28].copy_from_slice(&id.to_be_bytes());
    buf[28..32].copy_from_slice(&x.to_be_bytes());
    buf[32..36].copy_from_slice(&y.to_be_bytes());
    buf[36..40].copy_from_slice(&z.to_be_bytes());
    Ok(buf)
}

/// Sends OSC messages over UDP from a background thread.
///
/// `send` never blocks: messages go through a bounded queue and the oldest
/// queued message is discarded (and counted) when the queue is full, so a
/// slow or absent receiver cannot stall the producer.
pub struct OscEmitter {
    queue: Arc<ArrayQueue<[u8; OSC_MESSAGE_LEN]>>,
    dropped: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl OscEmitter {
    /// Connects to `target` (a `host:port` address) with room for `capacity`
    /// undelivered messages.
    pub fn connect(target: &str, capacity: usize) -> Result<Self, OscError> {
        assert!(capacity > 0, "queue capacity must be positive");
        let socket = UdpSocket::bind("0.0.0.0:0")?;
        socket.connect(target)?;
        let queue = Arc::new(ArrayQueue::new(capacity));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let queue = Arc::clone(&queue);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || sender_loop(&socket, &queue, &stop))
        };
        Ok(Self {
            queue,
            dropped: Arc::new(AtomicU64::new(0)),
            stop,
            handle: Some(handle),
        })
    }

    /// Queues one track update. Returns an error only for non-finite values;
    /// queue overflow silently drops the oldest message and counts it.
    pub fn send(&self, id: i32, pos: (f32, f32, f32)) -> Result<(), OscError> {
        let msg = encode_osc_track(id, pos)?;
        if self.queue.force_push(msg).is_some() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        Ok(())
    }

    /// Messages discarded so far because the receiver fell behind.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Stops the sender after draining whatever is still queued and returns
    /// the final dropped-message count.
    pub fn shutdown(mut self) -> u64 {
        self.stop_and_join();
        self.dropped()
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for OscEmitter {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn sender_loop(
    socket: &UdpSocket,
    queue: &ArrayQueue<[u8; OSC_MESSAGE_LEN]>,
    stop: &AtomicBool,
) {
    loop {
        match queue.pop() {
            // Delivery is best-effort; a refused destination must not kill
            // the sender, so send errors are ignored.
            Some(msg) => {
                let _ = socket.send(&msg);
            }
            None => {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
                std::thread::sleep(Duration::from_micros(200));
            }
        }
    }
}
