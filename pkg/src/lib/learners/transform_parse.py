import re

from typing import Optional

from ..const import TransformKind

WHITESPACE = r"\s*"


def group(expr):
    return "(?:" + expr + ")"


def bracket(before, after, expr):
    return before + group(expr) + after


def paren(expr):
    return bracket(r"\(" + WHITESPACE, WHITESPACE + r"\)", expr)


def capture(name, expr):
    return "(?P<" + name + ">" + expr + ")"


def re_sum(fst, snd, *rest):
    return "|".join([fst, snd, *rest])


def re_product(fst, snd, *rest):
    return "".join([fst, snd, *rest])


def token(expr):
    return WHITESPACE + group(expr) + WHITESPACE


# a variable name, optionally pinned to one time: "W1" or "W1@2"
NAME = r"[A-Za-z_][A-Za-z0-9_.]*(?:@\d+)?"

_FUNC = "func"
_VAR = "var"
_LHS = "lhs"
_RHS = "rhs"

unary_source = token(re_product(
    capture(_FUNC, re_sum(
        TransformKind.SIN.value, TransformKind.COS.value, TransformKind.SQUARE.value
    )),
    paren(capture(_VAR, NAME))
))
infix_product_source = token(re_product(
    capture(_LHS, NAME), token(r"\*"), capture(_RHS, NAME)
))
call_product_source = token(re_product(
    TransformKind.PRODUCT.value,
    paren(re_product(capture(_LHS, NAME), token(","), capture(_RHS, NAME)))
))

unary = re.compile(unary_source + "$")
infix_product = re.compile(infix_product_source + "$")
call_product = re.compile(call_product_source + "$")


def parse_transform(text: str) -> Optional[tuple[TransformKind, tuple[str, ...]]]:
    """Parse "sin(W1)", "cos(W2)", "square(W3)", "W2*W3" or "product(W2,W3)"."""
    if match := unary.match(text):
        return (TransformKind.from_string(match.group(_FUNC)), (match.group(_VAR),))
    elif match := call_product.match(text):
        return (TransformKind.PRODUCT, (match.group(_LHS), match.group(_RHS)))
    elif match := infix_product.match(text):
        return (TransformKind.PRODUCT, (match.group(_LHS), match.group(_RHS)))
    return None


def render_transform(kind: TransformKind, columns: tuple[str, ...]) -> str:
    if kind == TransformKind.PRODUCT:
        return "*".join(columns)
    return f"{kind.value}({columns[0]})"
