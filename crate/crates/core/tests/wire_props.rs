use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use servnet_core::model::Handle;
use servnet_core::wire::{
    decode_envelope, decode_reply, encode_envelope, encode_reply, reassemble_packets, split_packets, CallEnvelope,
    Fault, FaultKind, Packet, ParamValue, Reassembler, ReplyEnvelope, Value, WireError,
};

fn name() -> impl Strategy<Value = String> {
    "[^<>/\\p{Cc}\u{FFFE}\u{FFFF}]{1,12}"
}

fn handle() -> impl Strategy<Value = Handle> {
    ("[a-z][a-z0-9+.-]{0,5}", "[A-Za-z0-9.:&;=?#%_-]{1,30}", prop::collection::vec(name(), 0..5))
        .prop_map(|(scheme, rest, path)| Handle::new(format!("{scheme}://{rest}"), path).unwrap())
}

fn text() -> impl Strategy<Value = String> {
    "[^\\p{Cc}\u{FFFE}\u{FFFF}]{0,20}"
}

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        any::<i64>().prop_map(Value::Int),
        (-1e12f64..1e12).prop_map(Value::Float),
        any::<bool>().prop_map(Value::Bool),
        text().prop_map(Value::Str),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4).prop_map(|m: BTreeMap<_, _>| Value::Map(m)),
        ]
    })
}

fn param() -> impl Strategy<Value = ParamValue> {
    prop_oneof![
        value().prop_map(ParamValue::Structured),
        prop::collection::vec(any::<u8>(), 0..64).prop_map(ParamValue::Opaque),
    ]
}

fn envelope() -> impl Strategy<Value = CallEnvelope> {
    (
        handle(),
        "[A-Za-z_][A-Za-z0-9_]{0,10}",
        prop::collection::vec(param(), 0..4),
        prop::option::of(text()),
        prop::option::of(handle()),
    )
        .prop_map(|(target, method, params, credential, reply_to)| {
            let mut e = CallEnvelope::new(target, method, params).with_credential(credential);
            e.reply_to = reply_to;
            e
        })
}

fn fault_kind() -> impl Strategy<Value = FaultKind> {
    prop_oneof![
        Just(FaultKind::UnknownService),
        Just(FaultKind::UnknownMethod),
        Just(FaultKind::AccessDenied),
        Just(FaultKind::MethodFault),
        Just(FaultKind::ForeignNode),
        Just(FaultKind::BadRequest),
        Just(FaultKind::Internal),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn handle_wire_round_trip(h in handle()) {
        prop_assert_eq!(Handle::from_wire(&h.to_wire()).unwrap(), h);
    }

    #[test]
    fn packets_round_trip(msg in prop::collection::vec(any::<u8>(), 0..5000), size in 1usize..600, seed in any::<u64>()) {
        let mut ps = split_packets("id", &msg, size).unwrap();
        prop_assert_eq!(ps.len(), msg.len().div_ceil(size).max(1));
        prop_assert!(ps.iter().all(|p| p.payload.len() <= size));
        // Deterministic shuffle from the seed.
        let n = ps.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % (i as u64 + 1)) as usize;
            ps.swap(i, j);
        }
        prop_assert_eq!(reassemble_packets(ps).unwrap(), msg);
    }

    #[test]
    fn reply_round_trip(id in "[a-f0-9-]{1,36}", ok in any::<bool>(), p in param(), kind in fault_kind(), msg in text()) {
        let outcome = if ok { Ok(p) } else { Err(Fault { kind, message: msg }) };
        let r = ReplyEnvelope { message_id: id, outcome };
        prop_assert_eq!(decode_reply(&encode_reply(&r).unwrap()).unwrap(), r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn envelope_bijection(e in envelope()) {
        let bytes = encode_envelope(&e).unwrap();
        let back = decode_envelope(&bytes).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(encode_envelope(&back).unwrap(), bytes);
    }
}

#[test]
fn missing_packet_is_reported() {
    let mut ps = split_packets("m", &[1u8; 10], 3).unwrap();
    ps.remove(2);
    match reassemble_packets(ps) {
        Err(WireError::MissingPacket { missing, .. }) => assert_eq!(missing, vec![2]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reassembler_tolerates_duplicates_and_expires() {
    let r = Reassembler::new(Duration::from_secs(5));
    let ps = split_packets("m", b"hello world", 4).unwrap();
    let t0 = Instant::now();
    assert_eq!(r.insert_at(ps[1].clone(), t0).unwrap(), None);
    assert_eq!(r.insert_at(ps[1].clone(), t0).unwrap(), None);
    assert_eq!(r.insert_at(ps[0].clone(), t0).unwrap(), None);
    assert_eq!(r.insert_at(ps[2].clone(), t0).unwrap().unwrap(), b"hello world");
    assert_eq!(r.pending_count(), 0);

    r.insert_at(ps[0].clone(), t0).unwrap();
    assert_eq!(r.pending_count(), 1);
    let expired = r.expire(t0 + Duration::from_secs(6));
    assert_eq!(expired.len(), 1);
    assert_eq!(r.pending_count(), 0);
}

#[test]
fn conflicting_totals_rejected() {
    let r = Reassembler::new(Duration::from_secs(5));
    r.insert(Packet { message_id: "x".into(), index: 0, total: 3, payload: vec![1] }).unwrap();
    let e = r.insert(Packet { message_id: "x".into(), index: 1, total: 4, payload: vec![1] });
    assert!(matches!(e, Err(WireError::ConflictingPackets { .. })));
}

#[test]
fn zero_packet_size_rejected() {
    assert_eq!(split_packets("m", b"x", 0), Err(WireError::BadPacketSize(0)));
}
