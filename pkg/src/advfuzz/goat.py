"""Built-in deliberately flawed parser ("goat").

A recursive-descent reader for a lenient JSON dialect (comments, single
quotes, bare keys, hex literals, NaN/Infinity) followed by a small schema
checker. Every branch carries an instrumentation call ``t(site)``. Seeded
bugs raise :class:`TargetCrash`; one seeded hang spins until the executor's
deadline fires.
"""

from __future__ import annotations

from advfuzz.errors import TargetCrash
from advfuzz.harness import BugInfo, FuzzTarget, assign_locations

MAX_DEPTH = 16


class _Reject(Exception):
    """Malformed document; the target exits normally."""


BUGS = [
    BugInfo(1, "magic header GOAT! selects an unchecked legacy buffer", b"GOAT!{}"),
    BugInfo(2, "nesting deeper than 16 overflows the container stack", b"[" * 17),
    BugInfo(3, "len field larger than data length reads out of bounds", b'{"len":9,"data":"abc"}'),
    BugInfo(4, "\\u0000 escape writes a terminator into the string buffer", b'"\\u0000"'),
    BugInfo(5, "exponent above 999 overflows the scale table", b"1e1000"),
    BugInfo(6, "empty key bound to an empty array is freed twice", b'{"":[]}'),
    BugInfo(7, "five-element array ending in null writes past the slot table", b"[1,2,3,4,null]"),
    BugInfo(8, "unterminated block comment reads past the end of input", b"[1]/*"),
    BugInfo(9, "hex literal with more than 8 digits overflows a 32-bit slot", b"0x123456789"),
    BugInfo(10, "duplicate key rebinding a string to a number confuses the value type", b'{"a":"x","a":1}'),
    BugInfo(11, "string byte 0xF8 or above indexes past the UTF-8 length table", b'"\xf8"'),
    BugInfo(12, "integer with more than 20 digits overflows the digit buffer", b"1" * 21),
    BugInfo(13, "version 7 schema with a tags list longer than 3 skips a bounds check", b'{"version":7,"tags":[1,2,3,4]}'),
]

_LITERAL_BASE = {
    b'true': 296,
    b'false': 300,
    b'null': 305,
    b'NaN': 309,
    b'Infinity': 312,
}

HANG_TRIGGER = b"\x0b~"

SEEDS = [b"{}", b'{"id":1,"name":"goat"}', b"[1,2.5,true,null]"]


class _Goat:
    __slots__ = ("data", "n", "pos", "t", "depth")

    def __init__(self, data: bytes, t):
        self.data = data
        self.n = len(data)
        self.pos = 0
        self.t = t
        self.depth = 0

    # -- lexical helpers -------------------------------------------------

    def peek(self) -> int:
        if self.pos < self.n:
            return self.data[self.pos]
        return -1

    def skip_ws(self) -> None:
        t = self.t
        data = self.data
        n = self.n
        while self.pos < n:
            c = data[self.pos]
            if c == 0x20:
                t(0)
            elif c == 0x0A:
                t(1)
            elif c == 0x09:
                t(2)
            elif c == 0x0D:
                t(3)
            elif c == 0x0B:
                t(4)
                if self.pos + 1 < n and data[self.pos + 1] == 0x7E:
                    # seeded hang: never advances
                    while True:
                        t(5)
            elif c == 0x2F:
                t(6)
                self.comment()
                continue
            else:
                t(7)
                return
            self.pos += 1

    def comment(self) -> None:
        t = self.t
        data = self.data
        n = self.n
        if self.pos + 1 >= n:
            t(8)
            raise _Reject
        nxt = data[self.pos + 1]
        if nxt == 0x2F:
            t(9)
            end = data.find(b"\n", self.pos + 2)
            if end < 0:
                t(10)
                self.pos = n
            else:
                t(11)
                self.pos = end + 1
        elif nxt == 0x2A:
            t(12)
            end = data.find(b"*/", self.pos + 2)
            if end < 0:
                t(13)
                raise TargetCrash(8, "unterminated block comment")
            if end == self.pos + 2:
                t(14)
            self.pos = end + 2
        else:
            t(15)
            raise _Reject

    # -- grammar ----------------------------------------------------------

    def document(self):
        t = self.t
        data = self.data
        t(16)
        if self.n >= 1 and data[0] == 0x47:
            t(17)
            if self.n >= 2 and data[1] == 0x4F:
                t(18)
                if self.n >= 3 and data[2] == 0x41:
                    t(19)
                    if self.n >= 4 and data[3] == 0x54:
                        t(20)
                        if self.n >= 5 and data[4] == 0x21:
                            t(21)
                            raise TargetCrash(1, "legacy GOAT! header")
                        t(22)
                        self.pos = 4
        elif self.n >= 1 and data[0] == 0x23:
            t(23)
            self.directive()
        self.skip_ws()
        if self.pos >= self.n:
            t(24)
            return None
        value = self.value()
        self.skip_ws()
        if self.pos < self.n:
            t(25)
            raise _Reject
        t(26)
        return value

    def directive(self) -> None:
        t = self.t
        data = self.data
        end = data.find(b"\n")
        if end < 0:
            t(27)
            end = self.n
        line = data[1:end]
        if line.startswith(b"strict"):
            t(28)
        elif line.startswith(b"loose"):
            t(29)
        elif line.startswith(b"max"):
            t(30)
            digits = line[3:].strip()
            if digits.isdigit():
                t(31)
                if int(digits) > 100:
                    t(32)
            else:
                t(33)
        else:
            t(34)
        self.pos = min(end + 1, self.n)

    def value(self):
        t = self.t
        c = self.peek()
        if c == 0x7B:
            t(35)
            return self.obj()
        if c == 0x5B:
            t(36)
            return self.array()
        if c == 0x22:
            t(37)
            return self.string(0x22)
        if c == 0x27:
            t(38)
            return self.string(0x27)
        if c == 0x2D or 0x30 <= c <= 0x39:
            t(39)
            return self.number()
        if c == 0x74:
            t(40)
            self.literal(b"true")
            return True
        if c == 0x66:
            t(41)
            self.literal(b"false")
            return False
        if c == 0x6E:
            t(42)
            self.literal(b"null")
            return None
        if c == 0x4E:
            t(43)
            self.literal(b"NaN")
            return float("nan")
        if c == 0x49:
            t(44)
            self.literal(b"Infinity")
            return float("inf")
        t(45)
        raise _Reject

    def literal(self, word: bytes) -> None:
        t = self.t
        data = self.data
        base = _LITERAL_BASE[word]
        for i, ch in enumerate(word):
            if self.pos < self.n and data[self.pos] == ch:
                t(base + i)
                self.pos += 1
            else:
                t(47)
                raise _Reject
        t(46)

    def enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.t(48)
            raise TargetCrash(2, "container stack overflow")
        if self.depth > 8:
            self.t(49)
        elif self.depth > 4:
            self.t(50)

    def obj(self):
        t = self.t
        self.enter()
        self.pos += 1
        result: dict = {}
        self.skip_ws()
        if self.peek() == 0x7D:
            t(51)
            self.pos += 1
            self.depth -= 1
            return result
        while True:
            self.skip_ws()
            c = self.peek()
            if c == 0x22 or c == 0x27:
                t(52)
                key = self.string(c)
            elif (0x41 <= c <= 0x5A) or (0x61 <= c <= 0x7A) or c == 0x5F:
                t(53)
                key = self.bare_key()
            elif c == 0x7D:
                t(54)
                # trailing comma
                self.pos += 1
                break
            else:
                t(55)
                raise _Reject
            self.skip_ws()
            if self.peek() != 0x3A:
                t(56)
                raise _Reject
            self.pos += 1
            self.skip_ws()
            val = self.value()
            if key in result:
                t(57)
                old = result[key]
                if isinstance(old, str) and isinstance(val, (int, float)) and not isinstance(val, bool):
                    t(58)
                    raise TargetCrash(10, "duplicate key type confusion")
                t(59)
            if key == "" and isinstance(val, list) and not val:
                t(60)
                raise TargetCrash(6, "double free of empty-key array")
            result[key] = val
            self.skip_ws()
            c = self.peek()
            if c == 0x2C:
                t(61)
                self.pos += 1
            elif c == 0x7D:
                t(62)
                self.pos += 1
                break
            else:
                t(63)
                raise _Reject
        self.depth -= 1
        self.check_lengths(result)
        return result

    def check_lengths(self, obj: dict) -> None:
        t = self.t
        if "len" not in obj:
            return
        t(64)
        declared = obj["len"]
        if not isinstance(declared, int) or isinstance(declared, bool):
            t(65)
            return
        payload = obj.get("data")
        if payload is None:
            t(66)
            return
        if isinstance(payload, str):
            t(67)
            if declared > len(payload):
                t(68)
                raise TargetCrash(3, "length field exceeds data")
            if declared == len(payload):
                t(69)
            else:
                t(70)
        elif isinstance(payload, list):
            t(71)
            if declared != len(payload):
                t(72)
        else:
            t(73)

    def bare_key(self) -> str:
        t = self.t
        data = self.data
        start = self.pos
        while self.pos < self.n:
            c = data[self.pos]
            if (0x41 <= c <= 0x5A) or (0x61 <= c <= 0x7A) or c == 0x5F:
                t(74)
            elif 0x30 <= c <= 0x39:
                t(75)
            else:
                break
            self.pos += 1
        return data[start:self.pos].decode("latin-1")

    def array(self):
        t = self.t
        self.enter()
        self.pos += 1
        items: list = []
        self.skip_ws()
        if self.peek() == 0x5D:
            t(76)
            self.pos += 1
            self.depth -= 1
            return items
        while True:
            self.skip_ws()
            if self.peek() == 0x5D:
                t(77)
                self.pos += 1
                break
            items.append(self.value())
            self.skip_ws()
            c = self.peek()
            if c == 0x2C:
                t(78)
                self.pos += 1
            elif c == 0x5D:
                t(79)
                self.pos += 1
                break
            else:
                t(80)
                raise _Reject
        self.depth -= 1
        if len(items) == 5:
            t(81)
            if items[4] is None:
                t(82)
                raise TargetCrash(7, "slot table overflow")
        return items

    def string(self, quote: int) -> str:
        t = self.t
        data = self.data
        n = self.n
        self.pos += 1
        out = []
        while True:
            if self.pos >= n:
                t(83)
                raise _Reject
            c = data[self.pos]
            if c == quote:
                t(84)
                self.pos += 1
                break
            if c == 0x5C:
                t(85)
                out.append(self.escape())
                continue
            if c < 0x20:
                t(86)
                if c == 0x09:
                    t(87)
                else:
                    raise _Reject
            elif c < 0x30:
                t(88)
            elif c < 0x3A:
                t(89)
            elif c < 0x41:
                t(90)
            elif c < 0x5B:
                t(91)
            elif c < 0x61:
                t(92)
            elif c < 0x7B:
                t(93)
            elif c < 0x80:
                t(94)
            elif c < 0xC0:
                t(95)
            elif c < 0xE0:
                t(96)
            elif c < 0xF0:
                t(97)
            elif c < 0xF8:
                t(98)
            else:
                t(99)
                raise TargetCrash(11, "utf-8 length table overrun")
            out.append(chr(c))
            self.pos += 1
        return "".join(out)

    def escape(self) -> str:
        t = self.t
        data = self.data
        if self.pos + 1 >= self.n:
            t(100)
            raise _Reject
        c = data[self.pos + 1]
        self.pos += 2
        if c == 0x6E:
            t(101)
            return "\n"
        if c == 0x74:
            t(102)
            return "\t"
        if c == 0x72:
            t(103)
            return "\r"
        if c == 0x62:
            t(104)
            return "\b"
        if c == 0x66:
            t(105)
            return "\f"
        if c == 0x2F:
            t(106)
            return "/"
        if c == 0x5C:
            t(107)
            return "\\"
        if c == 0x22:
            t(108)
            return '"'
        if c == 0x27:
            t(109)
            return "'"
        if c == 0x78:
            t(110)
            return chr(self.hex_digits(2))
        if c == 0x75:
            t(111)
            code = self.hex_digits(4)
            if code == 0:
                t(112)
                raise TargetCrash(4, "embedded terminator")
            if 0xD800 <= code < 0xDC00:
                t(113)
            elif 0xDC00 <= code < 0xE000:
                t(114)
            elif code < 0x80:
                t(115)
            else:
                t(116)
            return chr(code)
        t(117)
        raise _Reject

    def hex_digits(self, count: int) -> int:
        t = self.t
        data = self.data
        value = 0
        for _ in range(count):
            if self.pos >= self.n:
                t(118)
                raise _Reject
            c = data[self.pos]
            if 0x30 <= c <= 0x39:
                t(119)
                d = c - 0x30
            elif 0x61 <= c <= 0x66:
                t(120)
                d = c - 0x57
            elif 0x41 <= c <= 0x46:
                t(121)
                d = c - 0x37
            else:
                t(122)
                raise _Reject
            value = value * 16 + d
            self.pos += 1
        return value

    def number(self):
        t = self.t
        data = self.data
        n = self.n
        negative = False
        if data[self.pos] == 0x2D:
            t(123)
            negative = True
            self.pos += 1
            if self.pos < n and data[self.pos] == 0x49:
                t(124)
                self.literal(b"Infinity")
                return float("-inf")
        if self.pos >= n:
            t(125)
            raise _Reject
        if data[self.pos] == 0x30 and self.pos + 1 < n and data[self.pos + 1] in (0x78, 0x58):
            t(126)
            self.pos += 2
            return self.hex_number(negative)
        start = self.pos
        while self.pos < n and 0x30 <= data[self.pos] <= 0x39:
            if data[self.pos] == 0x30:
                t(127)
            elif data[self.pos] < 0x35:
                t(128)
            else:
                t(129)
            self.pos += 1
        ndigits = self.pos - start
        if ndigits == 0:
            t(130)
            raise _Reject
        if ndigits > 20:
            t(131)
            raise TargetCrash(12, "digit buffer overflow")
        if ndigits > 1 and data[start] == 0x30:
            t(132)
        whole = int(data[start:self.pos])
        is_float = False
        frac = 0.0
        if self.pos < n and data[self.pos] == 0x2E:
            t(133)
            is_float = True
            self.pos += 1
            fstart = self.pos
            while self.pos < n and 0x30 <= data[self.pos] <= 0x39:
                t(134)
                self.pos += 1
            if self.pos == fstart:
                t(135)
                raise _Reject
            frac = float(b"0." + data[fstart:self.pos])
        exponent = 0
        if self.pos < n and data[self.pos] in (0x65, 0x45):
            t(136)
            is_float = True
            self.pos += 1
            esign = 1
            if self.pos < n and data[self.pos] == 0x2D:
                t(137)
                esign = -1
                self.pos += 1
            elif self.pos < n and data[self.pos] == 0x2B:
                t(138)
                self.pos += 1
            estart = self.pos
            while self.pos < n and 0x30 <= data[self.pos] <= 0x39:
                t(139)
                self.pos += 1
            if self.pos == estart:
                t(140)
                raise _Reject
            exponent = int(data[estart:self.pos])
            if exponent > 999:
                t(141)
                raise TargetCrash(5, "scale table overflow")
            if exponent > 308:
                t(142)
            exponent *= esign
        if is_float:
            t(143)
            try:
                value = (whole + frac) * (10.0 ** exponent)
            except OverflowError:
                t(144)
                value = float("inf")
        else:
            t(145)
            value = whole
        return -value if negative else value

    def hex_number(self, negative: bool) -> int:
        t = self.t
        data = self.data
        start = self.pos
        value = 0
        while self.pos < self.n:
            c = data[self.pos]
            if 0x30 <= c <= 0x39:
                t(146)
                d = c - 0x30
            elif 0x61 <= c <= 0x66:
                t(147)
                d = c - 0x57
            elif 0x41 <= c <= 0x46:
                t(148)
                d = c - 0x37
            else:
                break
            value = value * 16 + d
            self.pos += 1
        count = self.pos - start
        if count == 0:
            t(149)
            raise _Reject
        if count > 8:
            t(150)
            raise TargetCrash(9, "hex literal overflow")
        if count > 4:
            t(151)
        return -value if negative else value


# -- schema checker ---------------------------------------------------------


def _inspect(v, t, depth: int) -> None:
    if v is None:
        t(152)
    elif v is True:
        t(153)
    elif v is False:
        t(154)
    elif isinstance(v, int):
        _inspect_int(v, t)
    elif isinstance(v, float):
        _inspect_float(v, t)
    elif isinstance(v, str):
        _inspect_str(v, t)
    elif isinstance(v, list):
        _inspect_list(v, t, depth)
    else:
        _inspect_dict(v, t, depth)


def _inspect_int(v: int, t) -> None:
    if v < 0:
        t(155)
        v = -v
        if v > 1000:
            t(156)
    elif v == 0:
        t(157)
        return
    if v < 10:
        t(158)
    elif v < 100:
        t(159)
    elif v < 1000:
        t(160)
    elif v < 65536:
        t(161)
    else:
        t(162)
    if v % 2:
        t(163)
    else:
        t(164)
    if v == 42:
        t(165)
    elif v == 1337:
        t(166)
    elif v == 255:
        t(167)


def _inspect_float(v: float, t) -> None:
    if v != v:
        t(168)
        return
    if v in (float("inf"), float("-inf")):
        t(169)
        return
    if v < 0:
        t(170)
    elif v == 0:
        t(171)
    elif v < 1:
        t(172)
    elif v > 1e6:
        t(173)
    else:
        t(174)
    if v == int(v):
        t(175)


def _inspect_str(v: str, t) -> None:
    n = len(v)
    if n == 0:
        t(176)
        return
    if n == 1:
        t(177)
    elif n < 8:
        t(178)
    elif n < 32:
        t(179)
    else:
        t(180)
    head = v[0]
    if head.isdigit():
        t(181)
        if v.isdigit():
            t(182)
    elif head.isupper():
        t(183)
    elif head.islower():
        t(184)
    elif head == " ":
        t(185)
    else:
        t(186)
    if "@" in v:
        t(187)
        if v.endswith(".com"):
            t(188)
    if v == "goat":
        t(189)
    elif v.startswith("http"):
        t(190)
        if v.startswith("https://"):
            t(191)
    if any(ord(ch) > 0x7F for ch in v):
        t(192)


def _inspect_list(v: list, t, depth: int) -> None:
    n = len(v)
    if n == 0:
        t(193)
        return
    if n == 1:
        t(194)
    elif n == 2:
        t(195)
    elif n == 3:
        t(196)
    elif n < 8:
        t(197)
    else:
        t(198)
    kinds = {type(x) for x in v}
    if len(kinds) == 1:
        t(199)
        if int in kinds:
            t(200)
            if v == sorted(v):
                t(201)
        elif str in kinds:
            t(202)
    else:
        t(203)
    for item in v:
        _inspect(item, t, depth + 1)


_TYPE_NAMES = ("int", "str", "list", "map", "blob")


def _inspect_dict(v: dict, t, depth: int) -> None:
    n = len(v)
    if n == 0:
        t(204)
        return
    if n == 1:
        t(205)
    elif n < 4:
        t(206)
    else:
        t(207)
    if "id" in v:
        t(208)
        ident = v["id"]
        if isinstance(ident, int) and not isinstance(ident, bool):
            t(209)
            if ident < 0:
                t(210)
        elif isinstance(ident, str):
            t(211)
        else:
            t(212)
    if "name" in v:
        t(213)
        if isinstance(v["name"], str) and v["name"]:
            t(214)
            if v["name"][0].isupper():
                t(215)
    if "type" in v:
        t(216)
        _check_type(v, t)
    if "version" in v:
        t(217)
        _check_version(v, t)
    if "items" in v:
        t(218)
        items = v["items"]
        if isinstance(items, list):
            t(219)
            if len(items) > 2:
                t(220)
        else:
            t(221)
    if "flags" in v:
        t(259)
        _check_flags(v["flags"], t)
    if "mode" in v:
        t(260)
        _check_mode(v["mode"], t)
    if "count" in v:
        t(261)
        _check_count(v, t)
    if "email" in v:
        t(262)
        email = v["email"]
        if isinstance(email, str) and "@" in email:
            t(263)
            user, _, domain = email.partition("@")
            if not user:
                t(264)
            if "." in domain:
                t(265)
                if domain.endswith(".goat"):
                    t(266)
            else:
                t(267)
        else:
            t(268)
    if "sum" in v and "data" in v:
        t(222)
        _check_sum(v, t)
    for key, item in v.items():
        if key == "":
            t(223)
        elif key.startswith("_"):
            t(224)
        elif len(key) > 16:
            t(225)
        _inspect(item, t, depth + 1)


def _check_type(v: dict, t) -> None:
    kind = v["type"]
    if not isinstance(kind, str):
        t(226)
        return
    if kind not in _TYPE_NAMES:
        t(227)
        return
    value = v.get("value")
    if kind == "int":
        t(228)
        if isinstance(value, int) and not isinstance(value, bool):
            t(229)
        else:
            t(230)
    elif kind == "str":
        t(231)
        if isinstance(value, str):
            t(232)
        else:
            t(233)
    elif kind == "list":
        t(234)
        if isinstance(value, list):
            t(235)
        else:
            t(236)
    elif kind == "map":
        t(237)
        if isinstance(value, dict):
            t(238)
        else:
            t(239)
    else:
        t(240)
        if isinstance(value, str):
            t(241)
            if len(value) % 2 == 0:
                t(242)
                if all(ch in "0123456789abcdef" for ch in value):
                    t(243)


def _check_version(v: dict, t) -> None:
    ver = v["version"]
    if not isinstance(ver, int) or isinstance(ver, bool):
        t(244)
        return
    if ver < 1:
        t(245)
    elif ver == 1:
        t(246)
    elif ver == 2:
        t(247)
    elif ver < 7:
        t(248)
    elif ver == 7:
        t(249)
        tags = v.get("tags")
        if isinstance(tags, list):
            t(250)
            if len(tags) > 3:
                t(251)
                raise TargetCrash(13, "tags bounds check skipped")
    else:
        t(252)


def _check_flags(flags, t) -> None:
    if not isinstance(flags, int) or isinstance(flags, bool):
        t(269)
        return
    if flags < 0:
        t(270)
        return
    if flags & 0x01:
        t(271)
    if flags & 0x02:
        t(272)
    if flags & 0x04:
        t(273)
    if flags & 0x08:
        t(274)
    if flags & 0x10:
        t(275)
    if flags & 0x20:
        t(276)
    if flags & 0x40:
        t(277)
    if flags & 0x80:
        t(278)
        if flags & 0x7F == 0x7F:
            t(279)
    if flags > 0xFF:
        t(280)


def _check_mode(mode, t) -> None:
    if not isinstance(mode, str) or not mode:
        t(281)
        return
    head = ord(mode[0])
    if head < 0x61:
        t(282)
    elif head < 0x67:
        t(283)
    elif head < 0x6E:
        t(284)
    elif head < 0x74:
        t(285)
    elif head <= 0x7A:
        t(286)
    else:
        t(287)
    if mode == "rw":
        t(288)
    elif mode == "ro":
        t(289)
    elif mode == "exec":
        t(290)


def _check_count(v: dict, t) -> None:
    count = v["count"]
    items = v.get("items")
    if not isinstance(count, int) or isinstance(count, bool):
        t(291)
        return
    if not isinstance(items, list):
        t(292)
        return
    if count == len(items):
        t(293)
    elif count > len(items):
        t(294)
    else:
        t(295)


def _check_sum(v: dict, t) -> None:
    expected = v["sum"]
    payload = v["data"]
    if not isinstance(payload, str) or not isinstance(expected, int):
        t(253)
        return
    total = sum(ord(ch) for ch in payload) & 0xFF
    if total == expected:
        t(254)
    elif abs(total - expected) < 16:
        t(255)
    else:
        t(256)


def run(data: bytes, t) -> None:
    t(257)
    parser = _Goat(data, t)
    try:
        value = parser.document()
    except _Reject:
        t(258)
        return
    _inspect(value, t, 0)


N_SITES = 320
LOCATION_SEED = 0x60A7


def builtin_goat() -> FuzzTarget:
    return FuzzTarget(
        name="goat",
        run=run,
        bug_manifest=list(BUGS),
        locations=assign_locations(N_SITES, LOCATION_SEED),
        seeds=list(SEEDS),
    )
