//! Bit-exact encoding and decoding of fixed-layout control messages.
//!
//! A [`MessageSchema`] is an ordered list of [`FieldSpec`]s packed big-endian,
//! most significant bit first, with no padding between fields. Schemas are
//! data: they are loaded from a TOML definition document (see
//! `schemas/openflow.toml` for the shipped OpenFlow subset) and collected in a
//! [`SchemaRegistry`] keyed by the header `type` code.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::FieldSource;

/// Size of the common header (version, type, length, xid).
pub const HEADER_BYTES: usize = 8;

/// Byte offset of the header `type` field.
const TYPE_OFFSET_BYTES: usize = 1;

/// Byte offset of the header `length` field.
const LENGTH_OFFSET_BYTES: usize = 2;

const SHIPPED_SCHEMAS: &str = include_str!("../schemas/openflow.toml");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("no schema registered for message type code {0}")]
    UnknownMessageType(u8),
    #[error("{type_name}: need {expected} bytes, got {actual}")]
    TruncatedMessage {
        type_name: String,
        expected: usize,
        actual: usize,
    },
    #[error("{type_name}: {actual} bytes exceed the {expected}-byte layout")]
    TrailingBytes {
        type_name: String,
        expected: usize,
        actual: usize,
    },
    #[error("field `{field}` value {value} does not fit in {width_bits} bits")]
    ValueOverflow {
        field: String,
        value: u64,
        width_bits: u32,
    },
    #[error("no field `{field}` in schema `{type_name}`")]
    UnknownField { type_name: String, field: String },
    #[error("schema `{type_name}`: {reason}")]
    SchemaValidation { type_name: String, reason: String },
    #[error("schema document: {0}")]
    Document(String),
}

/// Which endpoint emits a message type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sender {
    #[default]
    Switch,
    Controller,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldSpec {
    pub name: String,
    pub offset_bits: u32,
    pub width_bits: u32,
    /// Inclusive valid range.
    pub domain: (u64, u64),
    /// Template value.
    pub default: u64,
}

impl FieldSpec {
    /// Largest value representable in the raw width.
    pub fn raw_max(&self) -> u64 {
        raw_max(self.width_bits)
    }

    pub fn fits(&self, value: u64) -> bool {
        value <= self.raw_max()
    }

    pub fn in_domain(&self, value: u64) -> bool {
        value >= self.domain.0 && value <= self.domain.1
    }
}

pub(crate) fn raw_max(width_bits: u32) -> u64 {
    if width_bits >= 64 {
        u64::MAX
    } else {
        (1u64 << width_bits) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageSchema {
    pub type_name: String,
    pub header_type_code: u8,
    pub total_bits: u32,
    pub sender: Sender,
    fields: Vec<FieldSpec>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl MessageSchema {
    /// Builds a schema from `(name, width_bits, domain, default)` entries,
    /// assigning offsets in order and checking every layout invariant.
    pub fn new(
        type_name: impl Into<String>,
        header_type_code: u8,
        total_bytes: usize,
        sender: Sender,
        entries: Vec<FieldEntry>,
    ) -> Result<Self, CodecError> {
        let type_name = type_name.into();
        let invalid = |reason: String| CodecError::SchemaValidation {
            type_name: type_name.clone(),
            reason,
        };
        if total_bytes == 0 {
            return Err(invalid("total_bytes must be positive".into()));
        }
        let mut fields = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        let mut offset: u64 = 0;
        for entry in entries {
            if entry.width_bits == 0 || entry.width_bits > 64 {
                return Err(invalid(format!(
                    "field `{}` width {} outside 1..=64",
                    entry.name, entry.width_bits
                )));
            }
            let max = raw_max(entry.width_bits);
            let lo = entry.domain_lo.unwrap_or(0);
            let hi = entry.domain_hi.unwrap_or(max);
            if lo > hi || hi > max {
                return Err(invalid(format!(
                    "field `{}` domain [{lo}, {hi}] does not fit {} bits",
                    entry.name, entry.width_bits
                )));
            }
            let default = entry.default.unwrap_or(0);
            if default > max {
                return Err(invalid(format!(
                    "field `{}` default {default} does not fit {} bits",
                    entry.name, entry.width_bits
                )));
            }
            if index.insert(entry.name.clone(), fields.len()).is_some() {
                return Err(invalid(format!("duplicate field name `{}`", entry.name)));
            }
            fields.push(FieldSpec {
                name: entry.name,
                offset_bits: offset as u32,
                width_bits: entry.width_bits,
                domain: (lo, hi),
                default,
            });
            offset += u64::from(entry.width_bits);
        }
        let total_bits = total_bytes as u64 * 8;
        if offset != total_bits {
            return Err(invalid(format!(
                "field widths sum to {offset} bits but total size is {total_bits} bits"
            )));
        }
        Ok(Self {
            type_name,
            header_type_code,
            total_bits: total_bits as u32,
            sender,
            fields,
            index,
        })
    }

    pub fn total_bytes(&self) -> usize {
        self.total_bits as usize / 8
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    pub fn field_names(&self) -> Vec<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.field_index(name).map(|i| &self.fields[i])
    }

    /// Unpacks `bytes` (exactly `total_bytes` long) into raw field values
    /// without consulting the header type code.
    pub fn unpack(&self, bytes: &[u8]) -> Result<Vec<u64>, CodecError> {
        self.check_len(bytes.len())?;
        Ok(self
            .fields
            .iter()
            .map(|f| read_bits(bytes, f.offset_bits as usize, f.width_bits as usize))
            .collect())
    }

    /// Packs raw values in schema order.
    pub fn pack(&self, values: &[u64]) -> Result<Vec<u8>, CodecError> {
        if values.len() != self.fields.len() {
            return Err(CodecError::SchemaValidation {
                type_name: self.type_name.clone(),
                reason: format!("expected {} values, got {}", self.fields.len(), values.len()),
            });
        }
        let mut out = vec![0u8; self.total_bytes()];
        for (spec, &value) in self.fields.iter().zip(values) {
            if !spec.fits(value) {
                return Err(CodecError::ValueOverflow {
                    field: spec.name.clone(),
                    value,
                    width_bits: spec.width_bits,
                });
            }
            write_bits(&mut out, spec.offset_bits as usize, spec.width_bits as usize, value);
        }
        Ok(out)
    }

    /// The template message with every field at its `default`.
    pub fn template(self: &Arc<Self>) -> ControlMessage {
        ControlMessage {
            schema: Arc::clone(self),
            values: self.fields.iter().map(|f| f.default).collect(),
        }
    }

    fn check_len(&self, len: usize) -> Result<(), CodecError> {
        let expected = self.total_bytes();
        if len < expected {
            return Err(CodecError::TruncatedMessage {
                type_name: self.type_name.clone(),
                expected,
                actual: len,
            });
        }
        if len > expected {
            return Err(CodecError::TrailingBytes {
                type_name: self.type_name.clone(),
                expected,
                actual: len,
            });
        }
        Ok(())
    }
}

/// One field entry of a schema definition document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub name: String,
    pub width_bits: u32,
    #[serde(default)]
    pub domain_lo: Option<u64>,
    #[serde(default)]
    pub domain_hi: Option<u64>,
    #[serde(default)]
    pub default: Option<u64>,
}

impl FieldEntry {
    pub fn new(name: impl Into<String>, width_bits: u32) -> Self {
        Self {
            name: name.into(),
            width_bits,
            domain_lo: None,
            domain_hi: None,
            default: None,
        }
    }

    pub fn domain(mut self, lo: u64, hi: u64) -> Self {
        self.domain_lo = Some(lo);
        self.domain_hi = Some(hi);
        self
    }

    pub fn default_value(mut self, value: u64) -> Self {
        self.default = Some(value);
        self
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaEntry {
    type_name: String,
    header_type_code: u8,
    total_bytes: usize,
    #[serde(default)]
    sender: Sender,
    #[serde(default)]
    fields: Vec<FieldEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaDocument {
    #[serde(default)]
    schema: Vec<SchemaEntry>,
}

/// Immutable set of schemas, keyed by type name and header type code.
#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    by_name: BTreeMap<String, Arc<MessageSchema>>,
    by_code: HashMap<u8, Arc<MessageSchema>>,
}

impl SchemaRegistry {
    /// Registry built from the shipped OpenFlow definition file.
    pub fn shipped() -> Self {
        load_schemas(SHIPPED_SCHEMAS).expect("shipped schema file is valid")
    }

    pub fn shipped_document() -> &'static str {
        SHIPPED_SCHEMAS
    }

    pub fn insert(&mut self, schema: MessageSchema) -> Result<(), CodecError> {
        if schema.total_bytes() < HEADER_BYTES {
            return Err(CodecError::SchemaValidation {
                type_name: schema.type_name,
                reason: format!("messages must hold the {HEADER_BYTES}-byte common header"),
            });
        }
        if self.by_name.contains_key(&schema.type_name) {
            return Err(CodecError::SchemaValidation {
                type_name: schema.type_name,
                reason: "duplicate schema name".into(),
            });
        }
        if let Some(other) = self.by_code.get(&schema.header_type_code) {
            return Err(CodecError::SchemaValidation {
                type_name: schema.type_name.clone(),
                reason: format!(
                    "header type code {} already used by `{}`",
                    schema.header_type_code, other.type_name
                ),
            });
        }
        let schema = Arc::new(schema);
        self.by_code.insert(schema.header_type_code, Arc::clone(&schema));
        self.by_name.insert(schema.type_name.clone(), schema);
        Ok(())
    }

    pub fn get(&self, type_name: &str) -> Option<&Arc<MessageSchema>> {
        self.by_name.get(type_name)
    }

    pub fn by_code(&self, code: u8) -> Option<&Arc<MessageSchema>> {
        self.by_code.get(&code)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<MessageSchema>> {
        self.by_name.values()
    }
}

/// Parses a schema definition document.
pub fn load_schemas(document: &str) -> Result<SchemaRegistry, CodecError> {
    let doc: SchemaDocument =
        toml::from_str(document).map_err(|e| CodecError::Document(e.to_string()))?;
    let mut registry = SchemaRegistry::default();
    for entry in doc.schema {
        let schema = MessageSchema::new(
            entry.type_name,
            entry.header_type_code,
            entry.total_bytes,
            entry.sender,
            entry.fields,
        )?;
        registry.insert(schema)?;
    }
    Ok(registry)
}

/// Header type code of a raw message, if the buffer holds a header.
pub fn peek_type_code(bytes: &[u8]) -> Option<u8> {
    (bytes.len() >= HEADER_BYTES).then(|| bytes[TYPE_OFFSET_BYTES])
}

/// Declared header length of a raw message, if the buffer holds a header.
pub fn peek_length(bytes: &[u8]) -> Option<u16> {
    (bytes.len() >= HEADER_BYTES)
        .then(|| u16::from_be_bytes([bytes[LENGTH_OFFSET_BYTES], bytes[LENGTH_OFFSET_BYTES + 1]]))
}

/// Decodes a message, choosing the schema from the header `type` byte.
pub fn decode(bytes: &[u8], registry: &SchemaRegistry) -> Result<ControlMessage, CodecError> {
    let code = peek_type_code(bytes).ok_or_else(|| CodecError::TruncatedMessage {
        type_name: "header".into(),
        expected: HEADER_BYTES,
        actual: bytes.len(),
    })?;
    let schema = registry
        .by_code(code)
        .ok_or(CodecError::UnknownMessageType(code))?;
    decode_as(bytes, schema)
}

/// Decodes `bytes` against a known schema, ignoring the header type code.
pub fn decode_as(bytes: &[u8], schema: &Arc<MessageSchema>) -> Result<ControlMessage, CodecError> {
    Ok(ControlMessage {
        schema: Arc::clone(schema),
        values: schema.unpack(bytes)?,
    })
}

pub fn encode(msg: &ControlMessage) -> Result<Vec<u8>, CodecError> {
    msg.schema.pack(&msg.values)
}

fn read_bits(buf: &[u8], offset: usize, width: usize) -> u64 {
    let end = offset + width;
    let mut bit = offset;
    let mut value: u64 = 0;
    while bit < end {
        let in_byte = bit % 8;
        let take = (8 - in_byte).min(end - bit);
        let shift = 8 - in_byte - take;
        let mask = ((1u16 << take) - 1) as u8;
        let chunk = (buf[bit / 8] >> shift) & mask;
        value = (value << take) | u64::from(chunk);
        bit += take;
    }
    value
}

fn write_bits(buf: &mut [u8], offset: usize, width: usize, value: u64) {
    let end = offset + width;
    let mut bit = offset;
    while bit < end {
        let in_byte = bit % 8;
        let take = (8 - in_byte).min(end - bit);
        let shift = 8 - in_byte - take;
        let mask = ((1u16 << take) - 1) as u8;
        let remaining = end - bit - take;
        let chunk = ((value >> remaining) as u8) & mask;
        let byte = &mut buf[bit / 8];
        *byte = (*byte & !(mask << shift)) | (chunk << shift);
        bit += take;
    }
}

/// A decoded message: its schema plus one raw value per field.
///
/// Values always fit their raw width but may lie outside the declared
/// domain once fuzzed.
#[derive(Clone, PartialEq, Eq)]
pub struct ControlMessage {
    schema: Arc<MessageSchema>,
    values: Vec<u64>,
}

impl ControlMessage {
    pub fn new(schema: Arc<MessageSchema>, values: Vec<u64>) -> Result<Self, CodecError> {
        if values.len() != schema.field_count() {
            return Err(CodecError::SchemaValidation {
                type_name: schema.type_name.clone(),
                reason: format!(
                    "expected {} values, got {}",
                    schema.field_count(),
                    values.len()
                ),
            });
        }
        for (spec, &value) in schema.fields().iter().zip(&values) {
            if !spec.fits(value) {
                return Err(CodecError::ValueOverflow {
                    field: spec.name.clone(),
                    value,
                    width_bits: spec.width_bits,
                });
            }
        }
        Ok(Self { schema, values })
    }

    pub fn schema(&self) -> &Arc<MessageSchema> {
        &self.schema
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn get(&self, field: &str) -> Option<u64> {
        self.schema.field_index(field).map(|i| self.values[i])
    }

    pub fn set(&mut self, field: &str, value: u64) -> Result<(), CodecError> {
        let i = self
            .schema
            .field_index(field)
            .ok_or_else(|| CodecError::UnknownField {
                type_name: self.schema.type_name.clone(),
                field: field.to_string(),
            })?;
        self.set_index(i, value)
    }

    pub fn set_index(&mut self, index: usize, value: u64) -> Result<(), CodecError> {
        let spec = &self.schema.fields()[index];
        if !spec.fits(value) {
            return Err(CodecError::ValueOverflow {
                field: spec.name.clone(),
                value,
                width_bits: spec.width_bits,
            });
        }
        self.values[index] = value;
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<String, u64> {
        self.schema
            .fields()
            .iter()
            .zip(&self.values)
            .map(|(f, &v)| (f.name.clone(), v))
            .collect()
    }
}

impl FieldSource for ControlMessage {
    fn field_value(&self, name: &str) -> Option<u64> {
        self.get(name)
    }
}

impl fmt::Debug for ControlMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut map = f.debug_map();
        for (spec, v) in self.schema.fields().iter().zip(&self.values) {
            map.entry(&spec.name, v);
        }
        map.finish()
    }
}

impl Serialize for ControlMessage {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len()))?;
        for (spec, v) in self.schema.fields().iter().zip(&self.values) {
            map.serialize_entry(&spec.name, v)?;
        }
        map.end()
    }
}

/// Names from `names` that are not fields of `schema`, deduplicated.
pub fn unknown_fields<'a>(
    schema: &MessageSchema,
    names: impl IntoIterator<Item = &'a str>,
) -> Vec<String> {
    let mut seen = HashSet::new();
    names
        .into_iter()
        .filter(|n| schema.field_index(n).is_none() && seen.insert(*n))
        .map(str::to_string)
        .collect()
}
