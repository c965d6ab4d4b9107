//! Hand-written lexer and recursive-descent parser.

use super::{AsmDiagnostic, Parsed, Pos, SourceMap, SourceUnit};
use crate::bits::BitString;
use crate::isa::{
    AluOp, Cmp, EntryMod, EntryOp, Instruction, InstructionBlock, Operand, Program, TableMod, Target,
};
use crate::space::{FieldRef, Space};
use crate::table::{EntryKey, FlowEntry, MatchType, MissPolicy, TableSchema};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

const PUNCT: [&str; 14] = ["<-", "->", "{", "}", "(", ")", "[", "]", ":", ",", "@", "+", "-", ";"];

fn lex(text: &str) -> Result<Vec<Token>, (Pos, String)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += (i - start) as u32;
            out.push(Token {
                tok: Tok::Word(chars[start..i].iter().collect()),
                pos,
            });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let p = PUNCT
            .iter()
            .find(|p| p.len() == 2 && two == **p)
            .or_else(|| PUNCT.iter().find(|p| p.len() == 1 && p.starts_with(c)));
        match p {
            Some(p) => {
                i += p.len();
                col += p.len() as u32;
                out.push(Token { tok: Tok::Punct(p), pos });
            }
            None => return Err((pos, format!("unexpected character {c:?}"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}

struct RawEntry {
    table: u16,
    pos: Pos,
    value: (String, Pos),
    mask: Option<(String, Pos)>,
    priority: u16,
    block_id: u32,
    params: Option<(String, Pos)>,
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    file: String,
}

type PResult<T> = Result<T, AsmDiagnostic>;

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => format!("'{w}'"),
        Tok::Punct(p) => format!("'{p}'"),
        Tok::Eof => "end of input".to_string(),
    }
}

fn parse_u64(s: &str) -> Option<u64> {
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()
    } else {
        s.parse().ok()
    }
}

impl Parser {
    fn new(src: &SourceUnit) -> PResult<Self> {
        let toks = lex(&src.text).map_err(|(pos, message)| AsmDiagnostic {
            file: src.name.clone(),
            pos,
            message,
        })?;
        Ok(Parser {
            toks,
            i: 0,
            file: src.name.clone(),
        })
    }

    fn err<T>(&self, pos: Pos, message: impl Into<String>) -> PResult<T> {
        Err(AsmDiagnostic {
            file: self.file.clone(),
            pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> &Token {
        &self.toks[self.i]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if t.tok != Tok::Eof {
            self.i += 1;
        }
        t
    }

    fn at_word(&self, w: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(x) if x == w)
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(x) if *x == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.at_punct(p);
        if hit {
            self.bump();
        }
        hit
    }

    fn eat_word(&mut self, w: &str) -> bool {
        let hit = self.at_word(w);
        if hit {
            self.bump();
        }
        hit
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Pos> {
        let t = self.bump();
        match &t.tok {
            Tok::Punct(x) if *x == p => Ok(t.pos),
            other => self.err(t.pos, format!("expected '{p}', found {}", describe(other))),
        }
    }

    fn expect_word(&mut self, w: &str) -> PResult<Pos> {
        let t = self.bump();
        match &t.tok {
            Tok::Word(x) if x == w => Ok(t.pos),
            other => self.err(t.pos, format!("expected '{w}', found {}", describe(other))),
        }
    }

    fn word(&mut self, what: &str) -> PResult<(String, Pos)> {
        let t = self.bump();
        match t.tok {
            Tok::Word(w) => Ok((w, t.pos)),
            other => self.err(t.pos, format!("expected {what}, found {}", describe(&other))),
        }
    }

    fn int<T: TryFrom<u64>>(&mut self, what: &str) -> PResult<T> {
        let (w, pos) = self.word(what)?;
        let Some(v) = parse_u64(&w) else {
            return self.err(pos, format!("expected {what}, found '{w}'"));
        };
        match T::try_from(v) {
            Ok(v) => Ok(v),
            Err(_) => self.err(pos, format!("{what} {v} is out of range")),
        }
    }

    fn hex(&mut self, what: &str) -> PResult<(String, Pos)> {
        let (w, pos) = self.word(what)?;
        Ok((w, pos))
    }

    fn decode_hex(&self, (s, pos): &(String, Pos), what: &str) -> PResult<Vec<u8>> {
        let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
        match hex::decode(digits) {
            Ok(b) => Ok(b),
            Err(_) => self.err(*pos, format!("{what} '{s}' is not an even-length hex string")),
        }
    }

    fn bitstring(&self, raw: &(String, Pos), width: usize, what: &str) -> PResult<BitString> {
        let bytes = self.decode_hex(raw, what)?;
        let want = width.div_ceil(8);
        if bytes.len() != want {
            return self.err(raw.1, format!("{what} needs {want} bytes for {width} bits, got {}", bytes.len()));
        }
        match BitString::from_bytes(width, bytes) {
            Some(b) => Ok(b),
            None => self.err(raw.1, format!("{what} has bits set beyond width {width}")),
        }
    }

    fn space(&mut self) -> PResult<(Space, Pos)> {
        let (w, pos) = self.word("a space (pkt, meta, param, pool)")?;
        match Space::from_mnemonic(&w) {
            Some(s) => Ok((s, pos)),
            None => self.err(pos, format!("unknown space '{w}'")),
        }
    }

    fn field(&mut self) -> PResult<FieldRef> {
        let (space, _) = self.space()?;
        self.expect_punct("[")?;
        let offset = self.int("bit offset")?;
        self.expect_punct(":")?;
        let length = self.int("bit length")?;
        self.expect_punct("]")?;
        Ok(FieldRef::new(space, offset, length))
    }

    fn packet_field(&mut self) -> PResult<FieldRef> {
        let pos = self.peek().pos;
        let f = self.field()?;
        if f.space != Space::Packet {
            return self.err(pos, "structural edits apply to pkt fields only");
        }
        Ok(f)
    }

    fn pool_ref(&mut self) -> PResult<(u32, u16)> {
        self.expect_word("pool")?;
        self.expect_punct("[")?;
        let off = self.int("pool bit offset")?;
        self.expect_punct(":")?;
        let len = self.int("pool bit length")?;
        self.expect_punct("]")?;
        Ok((off, len))
    }

    fn operand(&mut self) -> PResult<Operand> {
        if self.eat_word("imm") {
            let value = self.int("immediate value")?;
            let width = if self.eat_punct(":") {
                self.int("immediate width")?
            } else {
                64
            };
            return Ok(Operand::Imm { value, width });
        }
        Ok(Operand::Field(self.field()?))
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> PResult<T>, allow_empty: bool) -> PResult<Vec<T>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if allow_empty && self.eat_punct(")") {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_punct(")") {
                return Ok(out);
            }
            self.expect_punct(",")?;
        }
    }

    fn target(&mut self) -> PResult<Target> {
        let t = self.bump();
        match t.tok {
            Tok::Punct("@") => Ok(Target::Abs(self.int("instruction index")?)),
            Tok::Punct("+") => {
                let pos = self.peek().pos;
                let d: u64 = self.int("branch offset")?;
                match i16::try_from(d) {
                    Ok(d) => Ok(Target::Rel(d)),
                    Err(_) => self.err(pos, "branch offset out of range"),
                }
            }
            Tok::Punct("-") => {
                let pos = self.peek().pos;
                let d: u64 = self.int("branch offset")?;
                match i16::try_from(-(d as i64)) {
                    Ok(d) if d <= 0 => Ok(Target::Rel(d)),
                    _ => self.err(pos, "branch offset out of range"),
                }
            }
            other => self.err(t.pos, format!("expected a branch target (@N, +N, -N), found {}", describe(&other))),
        }
    }

    fn schema(&mut self) -> PResult<TableSchema> {
        let table_id = self.int("table id")?;
        let (m, mpos) = self.word("match type")?;
        let Some(match_type) = MatchType::from_mnemonic(&m) else {
            return self.err(mpos, format!("unknown match type '{m}'"));
        };
        self.expect_word("key")?;
        let key_width = self.int("key width")?;
        let mut schema = TableSchema::new(table_id, match_type, key_width);
        if self.eat_word("size") {
            schema.max_entries = self.int("table size")?;
        }
        self.expect_word("miss")?;
        let (w, pos) = self.word("miss policy")?;
        schema.miss = match w.as_str() {
            "drop" => MissPolicy::Drop,
            "packetin" => MissPolicy::PacketIn,
            "block" => MissPolicy::GotoBlock(self.int("block id")?),
            _ => return self.err(pos, format!("unknown miss policy '{w}'")),
        };
        Ok(schema)
    }

    fn instruction(&mut self) -> PResult<(Instruction, Pos)> {
        let (w, pos) = self.word("an instruction")?;
        let ins = match w.as_str() {
            "set" => {
                let dst = self.field()?;
                self.expect_punct("<-")?;
                Instruction::SetField {
                    dst,
                    src: self.operand()?,
                }
            }
            "addfield" => {
                let f = self.packet_field()?;
                self.expect_punct("<-")?;
                Instruction::AddField {
                    offset: f.offset,
                    length: f.length,
                    src: self.operand()?,
                }
            }
            "delfield" => {
                let f = self.packet_field()?;
                Instruction::DelField {
                    offset: f.offset,
                    length: f.length,
                }
            }
            "calc" => {
                let (o, opos) = self.word("an ALU operation")?;
                let Some(op) = AluOp::from_mnemonic(&o) else {
                    return self.err(opos, format!("unknown ALU operation '{o}'"));
                };
                let dst = self.field()?;
                self.expect_punct("<-")?;
                let a = self.operand()?;
                self.expect_punct(",")?;
                Instruction::Calc {
                    op,
                    dst,
                    a,
                    b: self.operand()?,
                }
            }
            "poolrd" => {
                let dst = self.field()?;
                self.expect_punct("<-")?;
                let (pool_offset, length) = self.pool_ref()?;
                Instruction::ReadPool {
                    dst,
                    pool_offset,
                    length,
                }
            }
            "poolwr" => {
                let (pool_offset, length) = self.pool_ref()?;
                self.expect_punct("<-")?;
                Instruction::WritePool {
                    pool_offset,
                    length,
                    src: self.operand()?,
                }
            }
            "poolinc" => {
                let (pool_offset, length) = self.pool_ref()?;
                self.expect_word("by")?;
                Instruction::IncPool {
                    pool_offset,
                    length,
                    delta: self.operand()?,
                }
            }
            "checksum" => {
                let dst = self.field()?;
                self.expect_word("over")?;
                Instruction::Checksum {
                    dst,
                    region: self.field()?,
                }
            }
            "goto" => {
                let table_id = self.int("table id")?;
                self.expect_word("key")?;
                Instruction::GotoTable {
                    table_id,
                    key: self.list(Self::field, false)?,
                }
            }
            "search" => {
                let table_id = self.int("table id")?;
                self.expect_word("key")?;
                let key = self.list(Self::field, false)?;
                self.expect_punct("->")?;
                Instruction::SearchTable {
                    table_id,
                    key,
                    dst: self.field()?,
                }
            }
            "out" => Instruction::Output { port: self.operand()? },
            "drop" => Instruction::Drop,
            "packetin" => Instruction::PacketIn {
                reason: self.int("reason code")?,
            },
            "br" => {
                let (c, cpos) = self.word("a comparison")?;
                let Some(cmp) = Cmp::from_mnemonic(&c) else {
                    return self.err(cpos, format!("unknown comparison '{c}'"));
                };
                let a = self.operand()?;
                self.expect_punct(",")?;
                let b = self.operand()?;
                self.expect_punct(",")?;
                Instruction::Branch {
                    a,
                    cmp,
                    b,
                    target: self.target()?,
                }
            }
            "jmp" => Instruction::Jump { target: self.target()? },
            "entrymod" => {
                let (o, opos) = self.word("insert, delete or modify")?;
                let op = match o.as_str() {
                    "insert" => EntryOp::Insert,
                    "delete" => EntryOp::Delete,
                    "modify" => EntryOp::Modify,
                    _ => return self.err(opos, format!("unknown entry operation '{o}'")),
                };
                let table_id = self.int("table id")?;
                self.expect_word("key")?;
                let key = self.list(Self::operand, false)?;
                self.expect_word("mask")?;
                let raw = self.hex("mask")?;
                let width = key.iter().map(Operand::width).sum();
                let mask = self.bitstring(&raw, width, "mask")?;
                self.expect_word("prio")?;
                let priority = self.int("priority")?;
                self.expect_word("block")?;
                let block_id = self.int("block id")?;
                self.expect_word("params")?;
                let params = self.list(Self::operand, true)?;
                Instruction::EntryMod(EntryMod {
                    op,
                    table_id,
                    key,
                    mask,
                    priority,
                    block_id,
                    params,
                })
            }
            "tablemod" => {
                let (o, opos) = self.word("create or delete")?;
                match o.as_str() {
                    "create" => Instruction::TableMod(TableMod::Create(self.schema()?)),
                    "delete" => Instruction::TableMod(TableMod::Delete(self.int("table id")?)),
                    _ => return self.err(opos, format!("unknown table operation '{o}'")),
                }
            }
            _ => return self.err(pos, format!("unknown instruction '{w}'")),
        };
        self.eat_punct(";");
        Ok((ins, pos))
    }

    fn raw_entry(&mut self, pos: Pos) -> PResult<RawEntry> {
        let table = self.int("table id")?;
        self.expect_word("value")?;
        let value = self.hex("entry value")?;
        let mask = if self.eat_word("mask") {
            Some(self.hex("entry mask")?)
        } else {
            None
        };
        let priority = if self.eat_word("prio") { self.int("priority")? } else { 0 };
        self.expect_word("block")?;
        let block_id = self.int("block id")?;
        let params = if self.eat_word("params") {
            Some(self.hex("parameters")?)
        } else {
            None
        };
        Ok(RawEntry {
            table,
            pos,
            value,
            mask,
            priority,
            block_id,
            params,
        })
    }

    fn resolve_entry(&self, raw: &RawEntry, width: Option<u16>) -> PResult<FlowEntry> {
        let Some(width) = width else {
            return self.err(raw.pos, format!("entry names undeclared table {}", raw.table));
        };
        let width = width as usize;
        let value = self.bitstring(&raw.value, width, "entry value")?;
        let mask = match &raw.mask {
            Some(m) => self.bitstring(m, width, "entry mask")?,
            None => BitString::ones(width),
        };
        let params = match &raw.params {
            Some(p) => self.decode_hex(p, "parameters")?,
            None => Vec::new(),
        };
        Ok(FlowEntry {
            value,
            mask,
            priority: raw.priority,
            block_id: raw.block_id,
            params,
        })
    }

    fn expect_end(&mut self) -> PResult<()> {
        let t = self.bump();
        match t.tok {
            Tok::Eof => Ok(()),
            other => self.err(t.pos, format!("unexpected {}", describe(&other))),
        }
    }
}

/// Parses a source unit into a program and a map back to source positions.
/// Syntax errors stop at the first problem; semantic checks are left to
/// validation (see `assemble`).
pub fn parse(src: &SourceUnit) -> Result<Parsed, AsmDiagnostic> {
    let mut p = Parser::new(src)?;
    let mut program = Program::default();
    let mut map = SourceMap::default();
    let mut raw_entries = Vec::new();
    loop {
        let t = p.bump();
        let Tok::Word(w) = &t.tok else {
            if t.tok == Tok::Eof {
                break;
            }
            return p.err(t.pos, format!("expected table, block, entry or start, found {}", describe(&t.tok)));
        };
        match w.as_str() {
            "table" => {
                program.schemas.push(p.schema()?);
                map.schemas.push(t.pos);
            }
            "block" => {
                let block_id = p.int("block id")?;
                p.expect_punct("{")?;
                let mut instructions = Vec::new();
                while !p.eat_punct("}") {
                    if p.peek().tok == Tok::Eof {
                        return p.err(p.peek().pos, format!("block {block_id} is missing its closing '}}'"));
                    }
                    let (ins, pos) = p.instruction()?;
                    map.instructions.entry((block_id, instructions.len())).or_insert(pos);
                    instructions.push(ins);
                }
                map.blocks.entry(block_id).or_insert(t.pos);
                program.blocks.push(InstructionBlock::new(block_id, instructions));
            }
            "entry" => raw_entries.push(p.raw_entry(t.pos)?),
            "start" => {
                program.start_block = p.int("block id")?;
                map.start = Some(t.pos);
            }
            _ => return p.err(t.pos, format!("expected table, block, entry or start, found '{w}'")),
        }
    }
    for raw in &raw_entries {
        let width = program.schema(raw.table).map(|s| s.key_width);
        let e = p.resolve_entry(raw, width)?;
        program.entries.push((raw.table, e));
        map.entries.push(raw.pos);
    }
    Ok(Parsed { program, map })
}

fn line_parser(text: &str) -> PResult<Parser> {
    let src = SourceUnit::new("<command>", text);
    let mut p = Parser::new(&src)?;
    p.eat_word("entry");
    Ok(p)
}

/// Parses one entry in `entry` syntax (the leading keyword is optional).
/// `key_width` supplies table key widths.
pub fn parse_entry(text: &str, key_width: impl Fn(u16) -> Option<u16>) -> Result<(u16, FlowEntry), AsmDiagnostic> {
    let mut p = line_parser(text)?;
    let pos = p.peek().pos;
    let raw = p.raw_entry(pos)?;
    p.expect_end()?;
    let e = p.resolve_entry(&raw, key_width(raw.table))?;
    Ok((raw.table, e))
}

/// Parses `<table> value <hex> [mask <hex>] [prio <n>]`, naming an entry to
/// delete.
pub fn parse_entry_key(text: &str, key_width: impl Fn(u16) -> Option<u16>) -> Result<(u16, EntryKey), AsmDiagnostic> {
    let mut p = line_parser(text)?;
    let pos = p.peek().pos;
    let table = p.int("table id")?;
    p.expect_word("value")?;
    let value = p.hex("entry value")?;
    let mask = if p.eat_word("mask") { Some(p.hex("entry mask")?) } else { None };
    let priority = if p.eat_word("prio") { p.int("priority")? } else { 0 };
    p.expect_end()?;
    let raw = RawEntry {
        table,
        pos,
        value,
        mask,
        priority,
        block_id: 0,
        params: None,
    };
    let e = p.resolve_entry(&raw, key_width(table))?;
    Ok((table, e.key()))
}
