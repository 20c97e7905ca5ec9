use std::sync::Arc;

use proptest::prelude::*;
use sdnfuzz_core::codec::{decode, decode_as, encode, load_schemas, ControlMessage, MessageSchema, SchemaRegistry};

/// Bit-at-a-time reference extraction, MSB first.
fn oracle_unpack(schema: &MessageSchema, bytes: &[u8]) -> Vec<u64> {
    schema
        .fields()
        .iter()
        .map(|f| {
            let mut v = 0u64;
            for b in 0..f.width_bits as usize {
                let pos = f.offset_bits as usize + b;
                let bit = (bytes[pos / 8] >> (7 - pos % 8)) & 1;
                v = (v << 1) | u64::from(bit);
            }
            v
        })
        .collect()
}

fn oracle_pack(schema: &MessageSchema, values: &[u64]) -> Vec<u8> {
    let mut out = vec![0u8; schema.total_bytes()];
    for (f, &v) in schema.fields().iter().zip(values) {
        for b in 0..f.width_bits as usize {
            let bit = (v >> (f.width_bits as usize - 1 - b)) & 1;
            let pos = f.offset_bits as usize + b;
            out[pos / 8] |= (bit as u8) << (7 - pos % 8);
        }
    }
    out
}

#[test]
fn shipped_census() {
    let reg = SchemaRegistry::shipped();
    assert_eq!(reg.len(), 5);
    for (name, bytes, fields) in [
        ("packet_in", 57, 30),
        ("hello", 8, 4),
        ("barrier_request", 8, 4),
        ("barrier_reply", 8, 4),
        ("flow_removed", 55, 22),
    ] {
        let s = reg.get(name).unwrap();
        assert_eq!((s.total_bytes(), s.field_count()), (bytes, fields), "{name}");
        assert_eq!(s.total_bits % 8, 0);
        let mut offset = 0;
        for f in s.fields() {
            assert_eq!(f.offset_bits, offset);
            offset += f.width_bits;
        }
        assert_eq!(offset, s.total_bits);
    }
}

#[test]
fn hello_has_four_header_fields() {
    let reg = SchemaRegistry::shipped();
    let bytes = [0x04, 0x00, 0x00, 0x08, 0xde, 0xad, 0xbe, 0xef];
    let msg = decode(&bytes, &reg).unwrap();
    assert_eq!(msg.schema().type_name, "hello");
    assert_eq!(msg.values(), &[4, 0, 8, 0xdead_beef]);
    assert_eq!(msg.schema().field_names(), ["version", "type", "length", "xid"]);
}

#[test]
fn packet_in_matches_bit_oracle() {
    let reg = SchemaRegistry::shipped();
    let schema = reg.get("packet_in").unwrap();
    let mut bytes: Vec<u8> = (0..57u32).map(|i| (i.wrapping_mul(97) ^ 0x5a) as u8).collect();
    bytes[1] = 10;
    let msg = decode(&bytes, &reg).unwrap();
    assert_eq!(msg.values().len(), 30);
    assert_eq!(msg.values(), oracle_unpack(schema, &bytes).as_slice());
    assert_eq!(encode(&msg).unwrap(), bytes);
}

#[test]
fn barrier_request_matches_bit_oracle() {
    let reg = SchemaRegistry::shipped();
    let schema = reg.get("barrier_request").unwrap();
    let msg = ControlMessage::new(Arc::clone(schema), vec![4, 20, 8, 0x0102_0304]).unwrap();
    let bytes = encode(&msg).unwrap();
    assert_eq!(bytes, oracle_pack(schema, msg.values()));
    assert_eq!(bytes, [4, 20, 0, 8, 1, 2, 3, 4]);
}

#[test]
fn decode_errors() {
    let reg = SchemaRegistry::shipped();
    assert!(decode(&[4, 99, 0, 8, 0, 0, 0, 0], &reg).is_err());
    assert!(decode(&[4, 10, 0, 57, 0, 0, 0, 0], &reg).is_err());
    assert!(decode(&[4, 0, 0], &reg).is_err());
    assert!(load_schemas("").unwrap().is_empty());
}

fn arb_message(schema: Arc<MessageSchema>) -> impl Strategy<Value = ControlMessage> {
    let widths: Vec<u32> = schema.fields().iter().map(|f| f.width_bits).collect();
    widths
        .into_iter()
        .map(|w| {
            let max = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
            0..=max
        })
        .collect::<Vec<_>>()
        .prop_map(move |values| ControlMessage::new(Arc::clone(&schema), values).unwrap())
}

fn arb_any_message() -> impl Strategy<Value = ControlMessage> {
    let reg = SchemaRegistry::shipped();
    let schemas: Vec<_> = reg.iter().cloned().collect();
    proptest::strategy::Union::new(schemas.into_iter().map(|s| arb_message(s).boxed()))
}

proptest! {
    #[test]
    fn message_round_trip(msg in arb_any_message()) {
        let bytes = encode(&msg).unwrap();
        prop_assert_eq!(bytes.len(), msg.schema().total_bytes());
        prop_assert_eq!(&bytes, &oracle_pack(msg.schema(), msg.values()));
        let back = decode_as(&bytes, msg.schema()).unwrap();
        prop_assert_eq!(back.values(), msg.values());
    }

    #[test]
    fn byte_round_trip(mut bytes in proptest::collection::vec(any::<u8>(), 57)) {
        let reg = SchemaRegistry::shipped();
        bytes[1] = 10;
        let msg = decode(&bytes, &reg).unwrap();
        prop_assert_eq!(encode(&msg).unwrap(), bytes);
    }

    #[test]
    fn field_isolation(msg in arb_message(Arc::clone(SchemaRegistry::shipped().get("packet_in").unwrap())),
                       idx in 0usize..30, seed in any::<u64>()) {
        let spec = msg.schema().fields()[idx].clone();
        let new = seed & spec.raw_max();
        let mut changed = msg.clone();
        changed.set_index(idx, new).unwrap();
        let a = encode(&msg).unwrap();
        let b = encode(&changed).unwrap();
        for pos in 0..msg.schema().total_bits as usize {
            let bit = |v: &[u8]| (v[pos / 8] >> (7 - pos % 8)) & 1;
            let inside = pos >= spec.offset_bits as usize && pos < (spec.offset_bits + spec.width_bits) as usize;
            if !inside {
                prop_assert_eq!(bit(&a), bit(&b));
            }
        }
    }
}
