import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from netgen import by_var, forward_model, random_input, random_network
from smtnet import formula as fm
from smtnet.encoder import (
    EncodingError,
    bias_delta_vars,
    encode_box_bound,
    encode_class_membership,
    encode_network_instance,
    encode_output_differs,
)
from smtnet.formula import VarId
from smtnet.network import Affine, HardTanh, Network, ReLU, classify, forward

F = Fraction


def relu_net():
    return Network("r", [Affine([[F(1)]], [F(0)]), ReLU()])


def model_for(net, inst, x, **kw):
    used = set(inst.variables) | set(fm.iter_variables(inst.constraints))
    return by_var(used, forward_model(net, inst.tag, x, **kw))


def test_variable_census_single_relu_layer():
    net = Network("c", [Affine([[F(1)] * 5] * 3, [F(0)] * 3), ReLU()])
    inst = encode_network_instance(net, "t")
    names = [v.name for v in inst.variables]
    assert len(names) == len(set(names)) == 5 + 2 * 3
    assert [v.name for v in inst.output_vars] == ["t_x2_0", "t_x2_1", "t_x2_2"]


def test_affine_outputs_materialized_between_affine_layers():
    net = Network("a", [Affine([[F(1)]], [F(0)]), Affine([[F(2)]], [F(1)])])
    names = [v.name for v in encode_network_instance(net, "t").variables]
    assert names == ["t_x0_0", "t_y0_0", "t_x1_0", "t_y1_0", "t_x2_0"]


def test_relu_encoding_example():
    net = relu_net()
    inst = encode_network_instance(net, "t")
    x_var, y_var = inst.input_vars[0], inst.output_vars[0]
    mid = inst.variables[1]
    good = {x_var: F(-1), mid: F(-1), y_var: F(0)}
    assert fm.evaluate(inst.constraints, good)
    assert not fm.evaluate(inst.constraints, {**good, y_var: F(-1)})


def test_bias_delta_example():
    net = relu_net()
    inst = encode_network_instance(net, "t", with_bias_delta=True)
    (db,) = inst.delta_bias_vars[0]
    assert db.name == "db0_0"
    model = model_for(net, inst, [F(-1)], delta_bias={0: [F(2)]})
    assert model[inst.output_vars[0]] == 1
    assert fm.evaluate(inst.constraints, model)
    patched = Network("p", [Affine([[F(1)]], [F(2)]), ReLU()])
    assert forward(patched, [F(-1)]) == (1,)


def test_bias_deltas_shared_between_instances():
    net = relu_net()
    used = set()
    a = encode_network_instance(net, "a", with_bias_delta=True, used_tags=used)
    b = encode_network_instance(net, "b", with_bias_delta=True, used_tags=used)
    assert a.delta_bias_vars == b.delta_bias_vars
    assert not set(a.variables) & set(b.variables)


def test_duplicate_tag_rejected():
    used = set()
    encode_network_instance(relu_net(), "a", used_tags=used)
    with pytest.raises(EncodingError, match="duplicate"):
        encode_network_instance(relu_net(), "a", used_tags=used)


def test_patchable_layer_must_be_affine():
    net = Network("n", [Affine([[F(1)]], [F(0)]), ReLU(), Affine([[F(1)]], [F(0)])])
    assert set(bias_delta_vars(net, [2])) == {2}
    with pytest.raises(EncodingError):
        bias_delta_vars(net, [1])
    inst = encode_network_instance(net, "t", with_bias_delta=True, patchable_layers=[2])
    assert set(inst.delta_bias_vars) == {2}


def test_input_delta_variables():
    net = Network("n", [Affine([[F(1), F(1)]], [F(0)])])
    inst = encode_network_instance(net, "t", with_input_delta=True)
    assert [v.name for v in inst.delta_input_vars] == ["t_dx_0", "t_dx_1"]
    model = model_for(net, inst, [F(1), F(2)], dx=[F(1, 2), F(-3)])
    assert model[inst.output_vars[0]] == F(1, 2)
    assert fm.evaluate(inst.constraints, model)


def test_class_membership_atom_counts():
    outs = [VarId("t", "x", 1, j) for j in range(10)]
    assert fm.count_atoms(encode_class_membership(outs, 3)) == 9
    assert encode_class_membership(outs[:1], 0) == fm.TRUE
    assert encode_class_membership(outs[:2], 0) == fm.gt(outs[0], outs[1])
    with pytest.raises(EncodingError):
        encode_class_membership(outs, 10)


def test_class_membership_strict():
    outs = [VarId("t", "x", 1, j) for j in range(2)]
    f = encode_class_membership(outs, 0)
    assert not fm.evaluate(f, {outs[0]: F(1), outs[1]: F(1)})
    assert fm.evaluate(f, {outs[0]: F(2), outs[1]: F(1)})


def test_box_bound():
    vs = [VarId("t", "dx", None, j) for j in range(3)]
    f = encode_box_bound(vs, F(1, 2))
    assert fm.count_atoms(f) == 6
    assert fm.evaluate(f, dict(zip(vs, [F(1, 2), F(-1, 2), F(0)])))
    assert not fm.evaluate(f, dict(zip(vs, [F(1, 2), F(-3, 4), F(0)])))
    zero = encode_box_bound(vs, 0)
    assert fm.evaluate(zero, dict.fromkeys(vs, F(0)))
    with pytest.raises(EncodingError):
        encode_box_bound(vs, -1)


def test_hardtanh_encoding_cases():
    net = Network("h", [Affine([[F(1)]], [F(0)]), HardTanh()])
    inst = encode_network_instance(net, "t")
    for x, y in ((F(3), F(1)), (F(-3), F(-1)), (F(1, 3), F(1, 3)), (F(1), F(1)), (F(-1), F(-1))):
        model = model_for(net, inst, [x])
        assert model[inst.output_vars[0]] == y
        assert fm.evaluate(inst.constraints, model)
        wrong = dict(model)
        wrong[inst.output_vars[0]] = y + F(1, 7)
        assert not fm.evaluate(inst.constraints, wrong)


# exact-evaluation soundness: the forward assignment satisfies the encoding,
# and moving any output makes it false (the encoding defines a function)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_forward_assignment_satisfies_encoding(seed, with_delta):
    rng = random.Random(seed)
    net = random_network(rng)
    x = random_input(rng, net.input_dim)
    deltas = None
    if with_delta:
        deltas = {k: [F(rng.randint(-4, 4), 4) for _ in range(net.layers[k].out_dim)] for k in net.affine_indices()}
    inst = encode_network_instance(net, "t", with_bias_delta=with_delta)
    named = forward_model(net, "t", x, delta_bias=deltas)
    model = {v: named[v.name] for v in fm.iter_variables(inst.constraints)}
    model.update(by_var(inst.input_vars, named))
    assert fm.evaluate(inst.constraints, model)
    j = rng.randrange(len(inst.output_vars))
    model[inst.output_vars[j]] += F(1, 3)
    assert not fm.evaluate(inst.constraints, model)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_class_membership_agrees_with_classify(seed):
    rng = random.Random(seed)
    net = random_network(rng)
    x = random_input(rng, net.input_dim)
    y = forward(net, x)
    inst = encode_network_instance(net, "t")
    values = dict(zip(inst.output_vars, y))
    for c in range(len(y)):
        member = fm.evaluate(encode_class_membership(inst.output_vars, c), values)
        strict = all(y[c] > v for j, v in enumerate(y) if j != c)
        assert member == strict
        if member:
            assert classify(y) == c


def test_output_differs():
    outs = [VarId("t", "x", 1, j) for j in range(2)]
    f = encode_output_differs(outs, [F(1), F(2)])
    assert not fm.evaluate(f, {outs[0]: F(1), outs[1]: F(2)})
    assert fm.evaluate(f, {outs[0]: F(1), outs[1]: F(3)})


def test_bad_tag():
    with pytest.raises(EncodingError):
        encode_network_instance(relu_net(), "a b")
