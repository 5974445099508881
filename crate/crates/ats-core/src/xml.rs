//! Minimal XML reading and writing for the audit log documents.
//!
//! Handles exactly the subset the log schema uses: elements, attributes,
//! text content and the five predefined entities. The parser is strict —
//! anything outside that subset is a schema violation at the layer above.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Escape a string for use in attribute values or text content.
pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct XmlError {
    pub offset: usize,
    pub reason: &'static str,
}

impl fmt::Display for XmlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "xml error at byte {}: {}", self.offset, self.reason)
    }
}

impl core::error::Error for XmlError {}

/// A parsed start tag (possibly self-closing).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tag {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub self_closing: bool,
}

impl Tag {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

/// Pull-style cursor over an XML document.
pub struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0 }
    }

    fn err(&self, reason: &'static str) -> XmlError {
        XmlError {
            offset: self.pos,
            reason,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.src.len()
    }

    /// True if the next tag is the closing tag `</name>` (not consumed).
    pub fn peek_close(&mut self, name: &str) -> bool {
        self.skip_ws();
        let mut probe = String::from("</");
        probe.push_str(name);
        probe.push('>');
        self.rest().starts_with(probe.as_str())
    }

    /// Consume the closing tag `</name>`.
    pub fn expect_close(&mut self, name: &str) -> Result<(), XmlError> {
        if !self.peek_close(name) {
            return Err(self.err("expected closing tag"));
        }
        self.pos += 2 + name.len() + 1;
        Ok(())
    }

    /// Consume a start tag and its attributes.
    pub fn expect_open(&mut self) -> Result<Tag, XmlError> {
        self.skip_ws();
        if !self.rest().starts_with('<') {
            return Err(self.err("expected start tag"));
        }
        if self.rest().starts_with("</") {
            return Err(self.err("unexpected closing tag"));
        }
        self.pos += 1;
        let name = self.read_name()?;
        let mut attrs = Vec::new();
        loop {
            self.skip_ws();
            if self.rest().starts_with("/>") {
                self.pos += 2;
                return Ok(Tag {
                    name,
                    attrs,
                    self_closing: true,
                });
            }
            if self.rest().starts_with('>') {
                self.pos += 1;
                return Ok(Tag {
                    name,
                    attrs,
                    self_closing: false,
                });
            }
            let attr_name = self.read_name()?;
            self.skip_ws();
            if !self.rest().starts_with('=') {
                return Err(self.err("expected '=' after attribute name"));
            }
            self.pos += 1;
            self.skip_ws();
            if !self.rest().starts_with('"') {
                return Err(self.err("expected '\"' opening attribute value"));
            }
            self.pos += 1;
            let value = self.read_until_quote()?;
            attrs.push((attr_name, value));
        }
    }

    /// Read text content up to the next tag, unescaping entities.
    pub fn read_text(&mut self) -> Result<String, XmlError> {
        let end = self
            .rest()
            .find('<')
            .map(|i| self.pos + i)
            .unwrap_or(self.src.len());
        let raw = &self.src[self.pos..end];
        self.pos = end;
        unescape(raw).ok_or_else(|| self.err("bad entity in text"))
    }

    fn read_name(&mut self) -> Result<String, XmlError> {
        let start = self.pos;
        for (i, c) in self.rest().char_indices() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == ':' {
                continue;
            }
            self.pos = start + i;
            if i == 0 {
                return Err(self.err("empty name"));
            }
            return Ok(String::from(&self.src[start..start + i]));
        }
        self.pos = self.src.len();
        Err(self.err("unterminated name"))
    }

    fn read_until_quote(&mut self) -> Result<String, XmlError> {
        let Some(end) = self.rest().find('"') else {
            return Err(self.err("unterminated attribute value"));
        };
        let raw = &self.src[self.pos..self.pos + end];
        self.pos += end + 1;
        unescape(raw).ok_or_else(|| self.err("bad entity in attribute"))
    }
}

fn unescape(s: &str) -> Option<String> {
    if !s.contains('&') {
        return Some(String::from(s));
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let semi = rest.find(';')?;
        match &rest[..semi + 1] {
            "&amp;" => out.push('&'),
            "&lt;" => out.push('<'),
            "&gt;" => out.push('>'),
            "&quot;" => out.push('"'),
            "&apos;" => out.push('\''),
            _ => return None,
        }
        rest = &rest[semi + 1..];
    }
    out.push_str(rest);
    Some(out)
}
