import random
import string

import pytest

from hyperttt.agent import (Aborted, Agent, AgentConfig, Listener, Outcome, ProtocolViolation,
                            infer_outcome, infer_reward)
from hyperttt.game import BotKind, Square
from hyperttt.hypermedia import IRI, Representation
from hyperttt.policy import HyperParams, RunState
from hyperttt.service import ServiceConfig, TTTService
from hyperttt.transfer import TransferConfig
from hyperttt.transport import HttpTransport, InProcessTransport, Response, serve
from hyperttt.vocab import Vocabulary

VOCAB = Vocabulary()
T = VOCAB.ttt
HP = HyperParams()
ME = "http://agent.test/"


def service(**kw):
    svc = TTTService(ServiceConfig(public_url="http://ttt.api", **kw))
    t = InProcessTransport()
    t.mount(svc.root, svc)
    return svc, t


def test_infer_reward():
    ctx = VOCAB.ttt_context()
    rep = Representation(ctx, properties={T("hasResult"): IRI("http://g/roles/X")})
    assert infer_reward(rep, "http://g/roles/X", HP, VOCAB) == 1.0
    assert infer_reward(rep, "http://g/roles/O", HP, VOCAB) == -1.0
    rep.properties[T("hasResult")] = IRI(T("Draw"))
    assert infer_reward(rep, "http://g/roles/O", HP, VOCAB) == 0.0
    assert infer_outcome(rep, "x", VOCAB) is Outcome.DRAW
    with pytest.raises(ValueError):
        infer_outcome(Representation(ctx), "x", VOCAB)


def test_advice_trigger():
    agent = Agent(AgentConfig(ME, "http://ttt.api/"), InProcessTransport())
    legal = [Square(1, 1), Square(2, 2)]
    assert agent.advice_trigger("---------", legal)
    agent.policy.set_value("---------", Square(1, 1), 0.8)
    assert not agent.advice_trigger("---------", legal)
    agent.policy.set_value("---------", Square(1, 1), 0.01)
    assert agent.advice_trigger("---------", legal)


def test_episode_basics():
    svc, t = service(bot=BotKind.RANDOM)
    agent = Agent(AgentConfig(ME, svc.root), t)
    for i in range(30):
        rec = agent.run_episode(index=i)
        assert rec.outcome in Outcome
        assert 1 <= rec.steps <= 5
        assert rec.advice_asked == rec.advice_followed == 0
        assert rec.reward == {Outcome.WIN: 1.0, Outcome.LOSS: -1.0, Outcome.DRAW: 0.0}[rec.outcome]
        assert list(agent.beliefs) == []
    assert len(agent.policy) > 0
    assert agent.policy.episode_count == 30


def test_every_put_targets_a_fresh_form():
    svc, t = service()
    agent = Agent(AgentConfig(ME, svc.root), t)
    seen = []
    agent.on_put = lambda href, rep: seen.append(href in {f.href for f in rep.forms})
    agent.run_training(20)
    assert seen and all(seen)


def test_bot_first_game():
    svc, t = service(agent_moves_first=False)
    agent = Agent(AgentConfig(ME, svc.root), t)
    recs = agent.run_training(20)
    assert all(r.steps <= 4 for r in recs)


def test_training_records_and_epsilon():
    svc, t = service()
    agent = Agent(AgentConfig(ME, svc.root, episodes=25), t)
    assert agent.run_training(0) == []
    recs = agent.run_training()
    assert [r.index for r in recs] == list(range(25))
    assert agent.epsilon == max(HP.epsilon_min, HP.epsilon_start * HP.epsilon_decay ** 25)
    total = sum(r.reward for r in recs)
    wins = sum(r.outcome is Outcome.WIN for r in recs)
    losses = sum(r.outcome is Outcome.LOSS for r in recs)
    assert total == wins - losses


def test_stopped_policy_freezes_learning_and_decay():
    svc, t = service()
    agent = Agent(AgentConfig(ME, svc.root), t)
    agent.run_training(10)
    before = sorted(agent.policy.items())
    agent.policy.set_run_state(RunState.STOPPED)
    agent.run_training(10)
    assert sorted(agent.policy.items()) == before
    assert agent.decay_steps == 10


def test_seeded_runs_are_reproducible():
    out = []
    for _ in range(2):
        svc, t = service(rng_seed=5)
        agent = Agent(AgentConfig(ME, svc.root, rng_seed=5), t)
        out.append([(r.outcome, r.steps) for r in agent.run_training(50)])
    assert out[0] == out[1]


def test_randomised_base_path_over_http():
    base = "".join(random.Random(99).choices(string.ascii_letters, k=16))
    svc = TTTService(ServiceConfig(base_path=base))
    with serve(svc) as handle:
        svc.set_public_url(handle.url)
        agent = Agent(AgentConfig(ME, svc.root), HttpTransport())
        recs = agent.run_training(10)
    assert len(recs) == 10
    assert agent.http_errors == {}


class Flaky:
    """Fails the first ``n`` requests with 503, then passes through."""

    def __init__(self, inner, n):
        self.inner, self.n = inner, n

    def request(self, method, url, body=None, timeout=None):
        if self.n > 0:
            self.n -= 1
            return Response.error(503, "busy")
        return self.inner.request(method, url, body, timeout)


def test_transient_errors_are_retried():
    svc, t = service()
    agent = Agent(AgentConfig(ME, svc.root, api_backoff=0.001), Flaky(t, 2))
    assert len(agent.run_training(3)) == 3


def test_unreachable_api_aborts_with_partial_records():
    svc, t = service()

    def kill(rec):
        if rec.index == 1:
            t.unmount(svc.root)

    agent = Agent(AgentConfig(ME, svc.root, api_retries=1, api_backoff=0.001,
                              episode_retries=1), t)
    with pytest.raises(Aborted) as exc:
        agent.run_training(5, on_episode=kill)
    assert [r.index for r in exc.value.records] == [0, 1]


def test_missing_affordance_is_a_protocol_violation():
    class NoForms:
        def handle(self, method, target, body):
            return Response(200, '{"ttt:status": "InProgress"}')

    t = InProcessTransport()
    t.mount("http://broken/", NoForms())
    agent = Agent(AgentConfig(ME, "http://broken/"), t)
    with pytest.raises(ProtocolViolation):
        agent.run_episode()


def test_advisee_needs_listen_url():
    with pytest.raises(ValueError):
        Agent(AgentConfig(ME, "http://x/", advisor_url="http://adv/message"),
              InProcessTransport())


def test_advised_training_over_http():
    svc = TTTService(ServiceConfig())
    with serve(svc) as handle:
        svc.set_public_url(handle.url)
        http = HttpTransport()
        teacher = Agent(AgentConfig("http://agent.zero/", svc.root), http)
        teacher.run_training(300)
        adv = Listener()
        adv.attach(teacher)
        me = Listener()
        cfg = AgentConfig("http://agent.one/", svc.root, transfer=TransferConfig(ask_budget=40),
                          advisor_iri="http://agent.zero/", advisor_url=adv.url + "message",
                          listen_url=me.url)
        student = Agent(cfg, http)
        me.attach(student)
        try:
            recs = student.run_training(30)
        finally:
            adv.close()
            me.close()
    asked = sum(r.advice_asked for r in recs)
    assert asked == 40 == student.advice_client.requests_sent
    assert student.advice_client.timeouts == 0
    assert sum(r.advice_followed for r in recs) >= 1
    assert student.http_errors == {}
    assert all(r.advice_followed <= r.advice_asked <= r.steps for r in recs)
