import pytest
from hypothesis import given
from hypothesis import strategies as st

from llspin.errors import ProgramError
from llspin.program import LOCK_MODES, Acquire, CpmgBlock, Delay, Gradient, Lock, Pulse, PulseProgram, StorageMarker
from llspin.pulselang import canonical, parse_program, serialize
from llspin.sequences import m2s
from llspin.spin import SpinSystem
from program_corpus import CORPUS_SIZE, corpus

finite = dict(allow_nan=False, allow_infinity=False)
times = st.floats(0, 1e4, **finite)
events = st.one_of(
    st.builds(Pulse, st.floats(-720, 720, **finite), st.floats(-720, 720, **finite)),
    st.builds(Delay, times),
    st.builds(CpmgBlock, st.floats(1e-9, 1.0, **finite), st.integers(1, 10_000), st.booleans()),
    st.builds(Gradient, st.floats(-1e-2, 1e-2, **finite), st.booleans()),
    st.builds(Lock, st.sampled_from(LOCK_MODES), times),
    st.builds(StorageMarker, times, st.sampled_from((None,) + LOCK_MODES)),
)
programs = st.builds(
    lambda evs, acq: PulseProgram(tuple(evs) + ((Acquire(),) if acq else ())), st.lists(events, max_size=15), st.booleans()
)


def test_two_event_example():
    prog = parse_program("pulse 90 y\nacquire")
    assert prog.events == (Pulse(90, 90), Acquire())


def test_full_grammar_with_comments_and_case():
    text = """
    # preparation
    PULSE 90 -y   # trailing comment
    cpmg tau=8.4443e-4 n=19 composite
    grad area=-1.5e-6 bipolar
    Lock mode=WALTZ16 t=.5
    store t=2 lock=ideal
    delay 1e-3
    pulse 45.5 123.25
    acquire
    """
    prog = parse_program(text)
    assert prog.events == (
        Pulse(90, 270), CpmgBlock(8.4443e-4, 19, True), Gradient(-1.5e-6, True), Lock("waltz16", 0.5),
        StorageMarker(2.0, "ideal"), Delay(1e-3), Pulse(45.5, 123.25), Acquire(),
    )


def test_empty_program_is_valid():
    assert parse_program("# nothing\n\n").events == ()
    assert serialize(PulseProgram(())) == ""


@pytest.mark.parametrize("i", range(CORPUS_SIZE))
def test_corpus_round_trip(i):
    prog = corpus()[i]
    text = serialize(prog)
    assert parse_program(text) == prog
    assert serialize(parse_program(text)) == text


def test_corpus_size():
    assert len(corpus()) == CORPUS_SIZE


@given(programs)
def test_parse_serialize_identity(prog):
    assert parse_program(serialize(prog)) == prog


@given(programs)
def test_serialize_is_canonical_and_idempotent(prog):
    text = serialize(prog)
    messy = "\n".join("   " + line.upper().replace(" ", "\t  ") + "  # note" for line in text.splitlines())
    assert canonical(messy) == text
    assert canonical(text) == text


def test_builtin_m2s_round_trip():
    prog = m2s(SpinSystem(50.0, 10.0, 600.0))
    assert parse_program(serialize(prog)).events == prog.events


def test_named_phases_in_output():
    assert serialize(PulseProgram((Pulse(90, -90), Pulse(180, 180), Pulse(90, 450)))) == (
        "pulse 90.0 -y\npulse 180.0 -x\npulse 90.0 y\n"
    )


@pytest.mark.parametrize(
    "text, line, column, fragment",
    [
        ("delay -1", 1, 1, "negative duration"),
        ("pulse 90 y\n  delay abc", 2, 9, "expected a number"),
        ("pulse 90", 1, 9, "takes 2 argument"),
        ("pulse 90 y z", 1, 12, "takes 2 argument"),
        ("cpmg tau=1e-3 n=2.5", 1, 17, "integer"),
        ("cpmg tau=1e-3", 1, 1, "needs n="),
        ("cpmg tau=1e-3 n=3 speed=2", 1, 19, "unknown key"),
        ("cpmg tau=1e-3 n=3 n=4", 1, 19, "duplicate key"),
        ("grad area=1e-6 fast", 1, 16, "unknown flag"),
        ("grad area=", 1, 11, "missing value"),
        ("lock mode=cw t=1", 1, 1, "lock mode"),
        ("wait 3", 1, 1, "unknown event"),
        ("acquire now", 1, 9, "takes 0 argument"),
    ],
)
def test_syntax_errors_carry_position(text, line, column, fragment):
    with pytest.raises(ProgramError) as info:
        parse_program(text)
    err = info.value
    assert (err.line, err.column) == (line, column)
    assert fragment in str(err)


def test_semantic_errors_carry_event_index():
    with pytest.raises(ProgramError) as info:
        parse_program("pulse 90 y\n# comment\ndelay 1\nstore t=-2")
    assert (info.value.line, info.value.index) == (4, 2)
    with pytest.raises(ProgramError) as info:
        parse_program("pulse 90 y\nacquire\nacquire")
    assert info.value.index == 1 and "acquire must be the last" in str(info.value)
