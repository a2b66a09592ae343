//! Minimal write-only JSON emission. Output is deterministic: fields appear
//! in insertion order and floats use Rust's shortest round-trip formatting.

/// Formats a float as a JSON number; non-finite values become null.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out
}

/// Incremental JSON object writer.
pub struct Obj {
    buf: String,
    first: bool,
}

impl Default for Obj {
    fn default() -> Self {
        Self::new()
    }
}

impl Obj {
    pub fn new() -> Self {
        Obj {
            buf: String::from("{"),
            first: true,
        }
    }

    fn key(&mut self, key: &str) {
        if !self.first {
            self.buf.push(',');
        }
        self.first = false;
        self.buf.push('"');
        self.buf.push_str(&escape(key));
        self.buf.push_str("\":");
    }

    pub fn raw(mut self, key: &str, raw: &str) -> Self {
        self.key(key);
        self.buf.push_str(raw);
        self
    }

    pub fn f64(self, key: &str, v: f64) -> Self {
        let formatted = num(v);
        self.raw(key, &formatted)
    }

    pub fn u64(self, key: &str, v: u64) -> Self {
        let formatted = v.to_string();
        self.raw(key, &formatted)
    }

    pub fn str(self, key: &str, v: &str) -> Self {
        let quoted = format!("\"{}\"", escape(v));
        self.raw(key, &quoted)
    }

    pub fn opt_f64(self, key: &str, v: Option<f64>) -> Self {
        match v {
            Some(v) => self.f64(key, v),
            None => self.raw(key, "null"),
        }
    }

    pub fn finish(mut self) -> String {
        self.buf.push('}');
        self.buf
    }
}

/// Renders an array from already-serialized elements.
pub fn arr(elements: impl IntoIterator<Item = String>) -> String {
    let mut buf = String::from("[");
    for (i, e) in elements.into_iter().enumerate() {
        if i > 0 {
            buf.push(',');
        }
        buf.push_str(&e);
    }
    buf.push(']');
    buf
}
