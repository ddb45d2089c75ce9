//! Size-bounded packet splitting and reassembly.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use super::WireError;

/// Default time a partially received message is kept before it is dropped.
pub const DEFAULT_REASSEMBLY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub message_id: String,
    pub index: u32,
    pub total: u32,
    pub payload: Vec<u8>,
}

/// Number of packets a message of `len` bytes splits into.
pub fn packet_count(len: usize, max_size: usize) -> usize {
    len.div_ceil(max_size).max(1)
}

/// Splits `msg` into packets of at most `max_size` bytes. An empty message
/// still produces one (empty) packet.
pub fn split_packets(message_id: &str, msg: &[u8], max_size: usize) -> Result<Vec<Packet>, WireError> {
    if max_size < 1 {
        return Err(WireError::BadPacketSize(max_size));
    }
    let total = packet_count(msg.len(), max_size);
    let total_u32 = u32::try_from(total).map_err(|_| WireError::BadPacketSize(max_size))?;
    if msg.is_empty() {
        return Ok(vec![Packet {
            message_id: message_id.to_owned(),
            index: 0,
            total: 1,
            payload: Vec::new(),
        }]);
    }
    Ok(msg
        .chunks(max_size)
        .enumerate()
        .map(|(i, chunk)| Packet {
            message_id: message_id.to_owned(),
            index: i as u32,
            total: total_u32,
            payload: chunk.to_vec(),
        })
        .collect())
}

#[derive(Debug, Default)]
struct Partial {
    total: u32,
    parts: BTreeMap<u32, Vec<u8>>,
}

impl Partial {
    fn accept(&mut self, p: Packet) -> Result<(), WireError> {
        if p.total == 0 || p.index >= p.total {
            return Err(WireError::ConflictingPackets {
                message_id: p.message_id,
                reason: format!("index {} outside total {}", p.index, p.total),
            });
        }
        if self.parts.is_empty() && self.total == 0 {
            self.total = p.total;
        } else if self.total != p.total {
            return Err(WireError::ConflictingPackets {
                message_id: p.message_id,
                reason: format!("total {} disagrees with earlier total {}", p.total, self.total),
            });
        }
        match self.parts.get(&p.index) {
            Some(existing) if *existing != p.payload => Err(WireError::ConflictingPackets {
                message_id: p.message_id,
                reason: format!("index {} received twice with different payloads", p.index),
            }),
            Some(_) => Ok(()),
            None => {
                self.parts.insert(p.index, p.payload);
                Ok(())
            }
        }
    }

    fn complete(&self) -> bool {
        self.total > 0 && self.parts.len() == self.total as usize
    }

    fn concat(self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.parts.values().map(Vec::len).sum());
        for part in self.parts.into_values() {
            out.extend_from_slice(&part);
        }
        out
    }
}

/// Reassembles a complete packet set, in any arrival order. Duplicate packets
/// with identical payloads are accepted.
pub fn reassemble_packets(ps: impl IntoIterator<Item = Packet>) -> Result<Vec<u8>, WireError> {
    let mut id: Option<String> = None;
    let mut partial = Partial::default();
    for p in ps {
        match &id {
            None => id = Some(p.message_id.clone()),
            Some(existing) if *existing != p.message_id => {
                return Err(WireError::ConflictingPackets {
                    message_id: p.message_id,
                    reason: format!("mixed with packets of message {existing}"),
                })
            }
            Some(_) => {}
        }
        partial.accept(p)?;
    }
    let message_id = id.unwrap_or_default();
    if !partial.complete() {
        let missing = (0..partial.total.max(1))
            .filter(|i| !partial.parts.contains_key(i))
            .collect();
        return Err(WireError::MissingPacket { message_id, missing });
    }
    Ok(partial.concat())
}

struct Pending {
    partial: Partial,
    first_seen: Instant,
}

/// Shared buffer of partially received messages keyed by message id.
/// Insertion and the completeness check happen under one lock.
pub struct Reassembler {
    timeout: Duration,
    pending: Mutex<HashMap<String, Pending>>,
}

impl Default for Reassembler {
    fn default() -> Self {
        Reassembler::new(DEFAULT_REASSEMBLY_TIMEOUT)
    }
}

impl Reassembler {
    pub fn new(timeout: Duration) -> Self {
        Reassembler {
            timeout,
            pending: Mutex::new(HashMap::new()),
        }
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    /// Adds a packet; returns the whole message once its last packet arrives.
    pub fn insert(&self, p: Packet) -> Result<Option<Vec<u8>>, WireError> {
        self.insert_at(p, Instant::now())
    }

    pub fn insert_at(&self, p: Packet, now: Instant) -> Result<Option<Vec<u8>>, WireError> {
        let mut pending = self.pending.lock();
        if let Some(expired) = pending
            .get(&p.message_id)
            .filter(|e| now.duration_since(e.first_seen) > self.timeout)
        {
            let missing = missing_indices(&expired.partial);
            let message_id = p.message_id.clone();
            pending.remove(&message_id);
            return Err(WireError::MissingPacket { message_id, missing });
        }
        let id = p.message_id.clone();
        let entry = pending.entry(id.clone()).or_insert_with(|| Pending {
            partial: Partial::default(),
            first_seen: now,
        });
        if let Err(e) = entry.partial.accept(p) {
            pending.remove(&id);
            return Err(e);
        }
        if entry.partial.complete() {
            let done = pending.remove(&id).expect("entry present");
            return Ok(Some(done.partial.concat()));
        }
        Ok(None)
    }

    /// Drops messages older than the timeout, reporting what each lacked.
    pub fn expire(&self, now: Instant) -> Vec<WireError> {
        let mut pending = self.pending.lock();
        let stale: Vec<String> = pending
            .iter()
            .filter(|(_, e)| now.duration_since(e.first_seen) > self.timeout)
            .map(|(k, _)| k.clone())
            .collect();
        stale
            .into_iter()
            .filter_map(|id| {
                pending.remove(&id).map(|e| WireError::MissingPacket {
                    missing: missing_indices(&e.partial),
                    message_id: id,
                })
            })
            .collect()
    }

    pub fn pending_count(&self) -> usize {
        self.pending.lock().len()
    }
}

fn missing_indices(p: &Partial) -> Vec<u32> {
    (0..p.total).filter(|i| !p.parts.contains_key(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_arithmetic() {
        let msg = vec![7u8; 1000];
        let ps = split_packets("m", &msg, 400).unwrap();
        assert_eq!(ps.iter().map(|p| p.payload.len()).collect::<Vec<_>>(), vec![400, 400, 200]);
        assert!(ps.iter().all(|p| p.total == 3));
        assert_eq!(split_packets("m", &[1; 100], 1024).unwrap().len(), 1);
    }

    #[test]
    fn empty_message_is_one_empty_packet() {
        let ps = split_packets("m", &[], 16).unwrap();
        assert_eq!(ps, vec![Packet { message_id: "m".into(), index: 0, total: 1, payload: vec![] }]);
        assert_eq!(reassemble_packets(ps).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn zero_packet_size_rejected() {
        assert_eq!(split_packets("m", b"abc", 0), Err(WireError::BadPacketSize(0)));
    }

    #[test]
    fn missing_and_conflicting() {
        let mut ps = split_packets("m", &[1, 2, 3, 4, 5], 2).unwrap();
        let dropped = ps.remove(1);
        assert_eq!(
            reassemble_packets(ps.clone()),
            Err(WireError::MissingPacket { message_id: "m".into(), missing: vec![1] })
        );
        let mut dup = ps.clone();
        dup.push(dropped.clone());
        dup.push(dropped.clone());
        assert_eq!(reassemble_packets(dup).unwrap(), vec![1, 2, 3, 4, 5]);
        let mut conflict = ps;
        conflict.push(dropped.clone());
        conflict.push(Packet { payload: vec![9, 9], ..dropped });
        assert!(matches!(reassemble_packets(conflict), Err(WireError::ConflictingPackets { .. })));
        assert!(matches!(reassemble_packets(Vec::new()), Err(WireError::MissingPacket { .. })));
    }

    #[test]
    fn buffer_completes_out_of_order_and_times_out() {
        let buf = Reassembler::new(Duration::from_secs(30));
        let t0 = Instant::now();
        let ps = split_packets("a", b"hello world", 4).unwrap();
        assert_eq!(buf.insert_at(ps[2].clone(), t0).unwrap(), None);
        assert_eq!(buf.insert_at(ps[0].clone(), t0).unwrap(), None);
        assert_eq!(buf.insert_at(ps[0].clone(), t0).unwrap(), None);
        assert_eq!(buf.insert_at(ps[1].clone(), t0).unwrap(), Some(b"hello world".to_vec()));
        assert_eq!(buf.pending_count(), 0);

        let qs = split_packets("b", b"abcdef", 2).unwrap();
        buf.insert_at(qs[0].clone(), t0).unwrap();
        let later = t0 + Duration::from_secs(31);
        let expired = buf.expire(later);
        assert_eq!(expired, vec![WireError::MissingPacket { message_id: "b".into(), missing: vec![1, 2] }]);
        assert_eq!(buf.pending_count(), 0);
    }
}
