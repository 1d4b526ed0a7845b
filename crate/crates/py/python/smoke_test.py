"""Smoke test for the qmdp extension module.

Build the module first (see README), then run: python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import qmdp  # noqa: E402


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    sv = qmdp.StateVector(2)
    sv.apply("h", 0)
    sv.apply("x", 1, controls=[0])
    assert close(sv.marginal([1, 0])[3], 0.5)
    assert close(sv.norm(), 1.0)
    sv.apply("ry", 0, angle=0.3, zero_controls=[1])

    try:
        qmdp.StateVector(40)
    except qmdp.QmdpError as err:
        assert "ceiling" in str(err)
    else:
        raise AssertionError("ceiling not enforced")

    mdp = qmdp.MdpSpec()
    assert (mdp.num_states, mdp.num_actions) == (4, 2)
    assert close(mdp.probability(0, 0, 1), 0.6)

    exact = qmdp.exact_distribution(2)
    assert close(sum(exact.values()), 1.0)
    assert qmdp.tvd(exact, qmdp.enumerate(2)) < 1e-12
    assert qmdp.tvd(exact, qmdp.exact_distribution(2, mode="static")) < 1e-9

    counts = qmdp.sample(2, 2000, 7)
    assert sum(counts.values()) == 2000
    assert counts == qmdp.sample(2, 2000, 7)

    dump, report = qmdp.circuit(1)
    assert dump.startswith("QUBITS 9\n")
    assert "interaction_qubit_count = 7" in report

    corpus = qmdp.reference_corpus()
    assert len(corpus) == 170
    csv = "id,bits\n" + "".join(f"{k},{v}\n" for k, v in corpus.items())
    triples, violations = qmdp.audit(csv)
    assert len(triples) == 15 and violations == []

    assert qmdp.optimal_iterations(0.25) == 1
    assert qmdp.optimal_iterations(0.5) == 0

    # Single-step search keeps the smoke test fast.
    run = qmdp.grover("11", steps=1, start="10", shots=1024, seed=3)
    theta = math.asin(math.sqrt(run.marked_probability))
    for j, s in enumerate(run.simulated):
        assert close(s, math.sin((2 * j + 1) * theta) ** 2)
    assert run.policy == {2: 1}

    t151, t143 = corpus["T-151"], corpus["T-143"]
    policy, conflicts = qmdp.policy({t151: 0.00625, t143: 0.003125})
    assert policy == {0: 0, 2: 1, 3: 1} and conflicts == [3]

    print("qmdp smoke test passed")


if __name__ == "__main__":
    main()
