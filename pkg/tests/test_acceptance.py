"""Acceptance suite: one test per criterion, pass/fail printed per criterion.

Training-based criteria share module-scoped fixtures: one full two-stage
desk-scale run (also the "full" ablation variant), two ablation variants at
the same budget, and a reduced-budget leave-one-out protocol. Tolerances and
bands are pinned here and must not be loosened to force a pass.

Run just this gate: pytest tests/test_acceptance.py -v
"""

import math

import numpy as np
import pytest

from garmentgan import autodiff as ad
from garmentgan import losses as L
from garmentgan import metrics as M
from garmentgan import networks as nets
from garmentgan.autodiff import Tensor
from garmentgan.data import SyntheticSpec, generate_synthetic, split_dataset
from garmentgan.metrics import OracleCollarClassifier
from garmentgan.training import (
    TrainConfig,
    inherit_weights,
    prepare_dataset,
    train_adversarial,
    train_reconstruction,
)

from gradcheck import FD_STEP, assert_grad_close, numeric_grad

# pinned thresholds (spec-stated or frozen from the first calibration run)
RECON_HALVING_RATIO = 0.5
EDIT_TYPE_MATCH_MIN = 0.80
UNTOUCHED_SSIM_MIN = 0.95
ABLATION_TIE_BAND = 2.0  # percentage points
ONE_OUT_LOWER_GUARD = 2.0  # one-out may beat full by at most this margin
ONE_OUT_UPPER_BAND = 25.0  # pinned from the first oracle calibration run

SMOKE_SEED = 3
DATA_SEED = 1
EVAL_SEED = 5


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[ACCEPTANCE] {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


def smoke_config(**overrides) -> TrainConfig:
    base = dict(recon_iters=300, adv_iters=150, seed=SMOKE_SEED, lambda_perceptual=0.25)
    base.update(overrides)
    return TrainConfig.desk_scale(**base)


@pytest.fixture(scope="module")
def desk_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept_data")
    manifest = generate_synthetic(SyntheticSpec(image_size=64, n_images=64, n_collar_shapes=3), seed=DATA_SEED, out_dir=out)
    train, test = split_dataset(manifest, 0.8, seed=DATA_SEED)
    return manifest, train, test


@pytest.fixture(scope="module")
def oracle():
    return OracleCollarClassifier(class_count=3, image_size=64)


@pytest.fixture(scope="module")
def full_run(desk_data):
    """Full two-stage smoke training; rows retained for the loss-curve check."""
    _, train, _ = desk_data
    config = smoke_config()
    rows: list = []
    recon = train_reconstruction(config, train, log_rows=rows)
    adv = train_adversarial(config, train, init=inherit_weights(recon, config), log_rows=rows)
    return {"config": config, "rows": rows, "recon": recon, "adv": adv}


@pytest.fixture(scope="module")
def skip_recon_run(desk_data):
    _, train, _ = desk_data
    config = smoke_config(skip_recon_stage=True)
    return train_adversarial(config, train, init=None)


@pytest.fixture(scope="module")
def rgb_input_run(desk_data):
    _, train, _ = desk_data
    config = smoke_config(rgb_instead_of_edge=True)
    recon = train_reconstruction(config, train)
    return train_adversarial(config, train, init=inherit_weights(recon, config))


def edit_items(test_manifest, config):
    """Deterministic reference->target pairing: next different-type record."""
    prepared = prepare_dataset(test_manifest, config)
    items = []
    for i, ref in enumerate(prepared):
        for j in range(1, len(prepared)):
            cand = prepared[(i + j) % len(prepared)]
            if cand.record.type_id != ref.record.type_id:
                items.append((ref, cand))
                break
    return items


def run_edits(generator, items, config):
    from garmentgan.preprocess import denormalize
    from garmentgan.training import _attribute_input, _masked_pixels

    outputs = []
    for ref, tgt in items:
        masked = _masked_pixels(ref)
        edge = _attribute_input(tgt, config, None)
        _, _, composed = nets.forward_edit_t(generator, Tensor(masked[None]), Tensor(edge[None]))
        outputs.append(denormalize(composed.data[0]))
    return outputs


# --- criterion 1: SAM algebra ---------------------------------------------------------


class TestSamAlgebra:
    def test_zero_mask_is_identity_on_base(self):
        rng = np.random.default_rng(0)
        base = rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        color = rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        out = nets.masked_blend(np.zeros((16, 16), dtype=np.float32), color, base)
        report("sam-zero-mask", bool((out == base).all()), "m=0 returns base bit-for-bit")

    def test_unit_mask_returns_color(self):
        rng = np.random.default_rng(1)
        base = rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        color = rng.uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        out = nets.masked_blend(np.ones((16, 16), dtype=np.float32), color, base)
        report("sam-unit-mask", bool((out == color).all()), "m=1 returns color bit-for-bit")

    def test_random_case_matches_loop_oracle(self):
        rng = np.random.default_rng(2)
        base = rng.uniform(-1, 1, size=(3, 4, 4))
        color = rng.uniform(-1, 1, size=(3, 4, 4))
        mask = rng.uniform(size=(4, 4))
        out = nets.masked_blend(mask, color, base)
        ref = np.empty_like(base)
        for c in range(3):
            for i in range(4):
                for j in range(4):
                    ref[c, i, j] = mask[i, j] * color[c, i, j] + (1 - mask[i, j]) * base[c, i, j]
        err = float(np.max(np.abs(out - ref)))
        report("sam-loop-oracle", err <= 1e-12, f"max deviation {err:.2e} <= 1e-12")


# --- criterion 2: loss unit values -----------------------------------------------------


class TestLossUnits:
    def test_recon_zero_and_half(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 0.4, size=(3, 8, 8))
        zero = float(L.recon_loss(a, a.copy()).data)
        half = float(L.recon_loss(a + 0.5, a).data)
        ok = abs(zero) <= 1e-6 and abs(half - 0.5) <= 1e-6
        report("loss-recon-units", ok, f"identical={zero:.2e}, +0.5 offset={half:.8f}")

    def test_attribute_loss_printed_value(self):
        value = float(L.attribute_loss(np.array([0.5, 0.5]), np.array([1.0, 0.0])).data)
        ok = abs(value - 2.0 * math.log(2.0)) <= 1e-6 and abs(value - 1.3863) <= 1e-4
        report("loss-attribute-unit", ok, f"V=[1,0], p=[.5,.5] -> {value:.7f} (2 ln 2)")

    def test_discriminator_adversarial_worst_case(self):
        d_fake = nets.DiscriminatorOutput(Tensor(np.array([1.0])), Tensor(np.array([[0.5, 0.5]])), [Tensor(np.zeros((1, 2, 1, 1)))])
        d_real = nets.DiscriminatorOutput(Tensor(np.array([0.0])), Tensor(np.array([[1.0, 0.0]])), [Tensor(np.zeros((1, 2, 1, 1)))])
        bundle = L.discriminator_loss(d_fake, d_real, np.array([[1.0, 0.0]]))
        adv = bundle.components["adv_d"]
        report("loss-disc-adversarial-unit", abs(adv - 1.0) <= 1e-6, f"0.5*(1+1) = {adv:.8f}")

    def test_perceptual_and_content_zero_at_identity(self):
        ext = L.PerceptualExtractor(backend="seeded_random_conv", layer_spec="block3", seed=7)
        img = np.random.default_rng(4).uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        vgg = float(L.perceptual_loss(ext, img, img.copy()).data)
        disc = nets.init_discriminator(nets.NetConfig(image_size=16, disc_base_channels=4, disc_layers=2, class_count=3), seed=0)
        cnt = float(L.content_loss(disc, img[None], img.copy()[None]).data)
        report("loss-identity-zeros", vgg == 0.0 and cnt == 0.0, f"vgg={vgg}, cnt={cnt}")

    def test_generator_bundle_resums(self):
        ext = L.PerceptualExtractor(backend="seeded_random_conv", layer_spec="block3", seed=7)
        rng = np.random.default_rng(5)
        edited = rng.uniform(-1, 1, size=(1, 3, 16, 16))
        original = rng.uniform(-1, 1, size=(1, 3, 16, 16))
        d_fake = nets.DiscriminatorOutput(Tensor(np.array([0.5])), Tensor(np.array([[0.6, 0.4]])), [Tensor(rng.normal(size=(1, 4, 2, 2)))])
        d_tgt = nets.DiscriminatorOutput(Tensor(np.array([0.2])), Tensor(np.array([[0.5, 0.5]])), [Tensor(rng.normal(size=(1, 4, 2, 2)))])
        bundle = L.generator_loss(d_fake, d_tgt, edited, np.array([[0.0, 1.0]]), original, ext, 0.1, 2.5)
        diff = abs(bundle.value - bundle.weighted_sum())
        report("loss-bundle-bookkeeping", diff <= 1e-9, f"total vs weighted resum diff {diff:.2e}")


# --- criterion 3: gradient suite --------------------------------------------------------

TINY4 = nets.NetConfig(image_size=4, base_channels=2, n_downsample=1, n_res_blocks=1, disc_base_channels=4, disc_layers=1, class_count=3)


def _probe_entries(build_scalar, group, rng, n_probes=3, rtol=1e-4):
    out = build_scalar()
    out.backward()
    names = group.names()
    name = names[int(rng.integers(0, len(names)))]
    t = group[name]
    flat = t.data.reshape(-1)
    gflat = t.grad.reshape(-1)
    checked = 0
    attempts = 0
    while checked < min(n_probes, flat.size) and attempts < 60:
        attempts += 1
        i = int(rng.integers(0, flat.size))
        orig = flat[i]

        def fd(h):
            flat[i] = orig + h
            fp = float(build_scalar().data)
            flat[i] = orig - h
            fm = float(build_scalar().data)
            flat[i] = orig
            return (fp - fm) / (2 * h)

        num_h, num_h2 = fd(FD_STEP), fd(FD_STEP / 2)
        if abs(num_h - num_h2) > 1e-6 * max(1.0, abs(num_h)):
            continue  # activation kink: central difference invalid here
        assert_grad_close(np.array([gflat[i]]), np.array([num_h2]), rtol=rtol)
        checked += 1
    assert checked >= 1
    group.zero_grads()
    return checked


class TestGradientSuite:
    def test_decode_finite_differences(self):
        gen = nets.init_generator(TINY4, seed=8, dtype=np.float64)
        fused = np.random.default_rng(6).normal(size=(1, 2 * TINY4.latent_channels, 2, 2))

        def scalar():
            m, c = nets.decode(gen, Tensor(fused))
            return ad.add(ad.total_sum(m), ad.total_sum(c))

        n = _probe_entries(scalar, gen.decoder, np.random.default_rng(0))
        report("grad-decode", True, f"{n} sampled decoder parameters within 1e-4")

    def test_discriminate_finite_differences(self):
        disc = nets.init_discriminator(TINY4, seed=9, dtype=np.float64)
        x = np.random.default_rng(7).uniform(-1, 1, size=(1, 3, 4, 4))

        def scalar():
            out = nets.discriminate_t(disc, Tensor(x))
            return ad.add(ad.total_sum(out.realness), ad.total_sum(out.attribute_probs))

        total = 0
        for group in (disc.trunk, disc.realness_head, disc.attribute_head):
            disc.zero_grads()  # each probe pass re-runs backward from a clean slate
            total += _probe_entries(scalar, group, np.random.default_rng(1))
        report("grad-discriminate", True, f"{total} sampled parameters within 1e-4")

    def test_every_loss_finite_differences_on_4x4(self):
        rng = np.random.default_rng(8)
        checks = []

        a0 = rng.uniform(-0.5, 0.5, size=(1, 3, 4, 4))
        b0 = rng.uniform(-0.5, 0.5, size=(1, 3, 4, 4))
        t = Tensor(a0.copy(), requires_grad=True)
        L.recon_loss(t, Tensor(b0)).backward()
        assert_grad_close(t.grad, numeric_grad(lambda v: float(np.mean(np.abs(v - b0))), a0))
        checks.append("recon")

        ext = L.PerceptualExtractor(backend="seeded_random_conv", layer_spec="block3", seed=9)
        t = Tensor(a0.copy(), requires_grad=True)
        L.perceptual_loss(ext, t, Tensor(b0)).backward()
        assert_grad_close(t.grad, numeric_grad(lambda v: float(L.perceptual_loss(ext, Tensor(v), Tensor(b0)).data), a0), rtol=2e-4)
        checks.append("vgg")

        p0 = rng.uniform(0.2, 0.8, size=(1, 3))
        v = np.array([[0.0, 1.0, 0.0]])
        t = Tensor(p0.copy(), requires_grad=True)
        L.attribute_loss(t, v).backward()
        assert_grad_close(t.grad, numeric_grad(lambda pv: -float(np.sum(v * np.log(pv) + (1 - v) * np.log(1 - pv))), p0))
        checks.append("att")

        disc = nets.init_discriminator(TINY4, seed=10, dtype=np.float64)
        t = Tensor(a0.copy(), requires_grad=True)
        L.content_loss(disc, t, Tensor(b0)).backward()
        assert_grad_close(t.grad, numeric_grad(lambda v: float(L.content_loss(disc, Tensor(v), Tensor(b0)).data), a0), rtol=3e-4)
        checks.append("cnt")

        v_t = np.array([[0.0, 1.0, 0.0]])
        original = rng.uniform(-0.5, 0.5, size=(1, 3, 4, 4))
        target_img = rng.uniform(-0.5, 0.5, size=(1, 3, 4, 4))

        def g_loss(v):
            t2 = Tensor(v) if not isinstance(v, Tensor) else v
            d_fake = nets.discriminate_t(disc, t2)
            d_tgt = nets.discriminate_t(disc, Tensor(target_img))
            return L.generator_loss(d_fake, d_tgt, t2, v_t, Tensor(original), ext)

        t = Tensor(a0.copy(), requires_grad=True)
        g_loss(t).total.backward()
        assert_grad_close(t.grad, numeric_grad(lambda v: g_loss(v).value, a0), rtol=3e-4)
        checks.append("adv_g")

        fake_img = rng.uniform(-0.5, 0.5, size=(1, 3, 4, 4))
        v_o = np.array([[1.0, 0.0, 0.0]])

        def d_loss(v):
            t2 = Tensor(v) if not isinstance(v, Tensor) else v
            d_fake = nets.discriminate_t(disc, Tensor(fake_img))
            d_real = nets.discriminate_t(disc, t2)
            return L.discriminator_loss(d_fake, d_real, v_o)

        t = Tensor(a0.copy(), requires_grad=True)
        d_loss(t).total.backward()
        assert_grad_close(t.grad, numeric_grad(lambda v: d_loss(v).value, a0), rtol=3e-4)
        checks.append("adv_d")

        report("grad-all-losses", len(checks) == 6, f"float64 finite differences for {checks}")


# --- criterion 4: metric oracles --------------------------------------------------------


class TestMetricOracles:
    def test_ssim_psnr_against_direct_formulas(self):
        from test_metrics import ssim_loop_oracle

        rng = np.random.default_rng(10)
        worst_ssim = 0.0
        worst_psnr = 0.0
        for _ in range(25):
            a = rng.integers(0, 256, size=(16, 16)).astype(np.float64)
            b = rng.integers(0, 256, size=(16, 16)).astype(np.float64)
            worst_ssim = max(worst_ssim, abs(M.ssim(a, b) - ssim_loop_oracle(a, b)))
            mse = float(np.mean((a - b) ** 2))
            worst_psnr = max(worst_psnr, abs(M.psnr(a, b) - 10 * math.log10(255**2 / mse)))
        ok = worst_ssim <= 1e-6 and worst_psnr <= 1e-6
        report("metric-oracles", ok, f"25 pairs: ssim dev {worst_ssim:.2e}, psnr dev {worst_psnr:.2e}")

    def test_psnr_uniform_difference_case(self):
        a = np.full((8, 8, 3), 40.0)
        value = M.psnr(a, a + 16.0)
        report("metric-psnr-16", abs(value - 24.0487) <= 1e-3, f"uniform diff 16 -> {value:.5f} dB")


# --- criterion 5: Algorithm 1 routing ----------------------------------------------------


class TestAlgorithmRouting:
    def test_update_routing_and_inheritance(self, micro_dataset):
        from conftest import micro_config

        config = micro_config()
        prepared = prepare_dataset(micro_dataset, config)
        cfg_net = config.net_config(micro_dataset.class_count)
        gen = nets.init_generator(cfg_net, 0)
        disc = nets.init_discriminator(cfg_net, 0)
        opt_g = nets.MultiGroupAdam(gen.groups(), config.learning_rate, config.optimizer_betas)
        opt_d = nets.MultiGroupAdam(disc.groups(), config.learning_rate, config.optimizer_betas)
        extractor = config.extractor()
        ref, tgt = prepared[0], prepared[1]
        masked = Tensor(np.stack([ref.norm * 0.5]))
        edges = Tensor(np.stack([tgt.edge_input]))

        # discriminator step: generator must stay bitwise identical
        _, _, fake = nets.forward_edit_t(gen, masked, edges)
        d_bundle = L.discriminator_loss(
            nets.discriminate_t(disc, Tensor(fake.data)),
            nets.discriminate_t(disc, Tensor(np.stack([ref.norm]))),
            ref.onehot[None],
        )
        gen_snap = gen.copy()
        d_bundle.total.backward()
        opt_d.step()
        gen_frozen = gen.equals(gen_snap)
        gen.zero_grads()
        disc.zero_grads()

        # generator step: discriminator must stay bitwise identical
        _, _, edited = nets.forward_edit_t(gen, masked, edges)
        g_bundle = L.generator_loss(
            nets.discriminate_t(disc, edited),
            nets.discriminate_t(disc, Tensor(np.stack([tgt.norm]))),
            edited,
            tgt.onehot[None],
            Tensor(np.stack([ref.norm])),
            extractor,
        )
        disc_snap = disc.copy()
        g_bundle.total.backward()
        opt_g.step()
        disc_frozen = disc.equals(disc_snap)

        recon_ckpt = train_reconstruction(micro_config(recon_iters=2), micro_dataset)
        gen2, _ = inherit_weights(recon_ckpt, config)
        inherited = gen2.edge_encoder.equals(recon_ckpt.generator.edge_encoder) and gen2.decoder.equals(recon_ckpt.generator.decoder)

        ok = gen_frozen and disc_frozen and inherited
        report(
            "algorithm-routing",
            ok,
            f"gen frozen in D step: {gen_frozen}; disc frozen in G step: {disc_frozen}; edge-encoder+decoder inherited bitwise: {inherited}",
        )


# --- criteria 6-7: training smokes --------------------------------------------------------


class TestSmokeTraining:
    def test_reconstruction_loss_halves(self, full_run):
        losses = [r["recon"] for r in full_run["rows"] if r["stage"] == "recon"]
        initial = float(np.mean(losses[:10]))
        final = float(np.mean(losses[-10:]))
        ratio = final / initial
        report("smoke-reconstruction", ratio <= RECON_HALVING_RATIO, f"smoothed L_R ratio {ratio:.3f} <= {RECON_HALVING_RATIO}")

    def test_editing_type_match_and_untouched_region(self, full_run, desk_data, oracle):
        _, _, test = desk_data
        config = full_run["config"]
        items = edit_items(test, config)
        edited = run_edits(full_run["adv"].generator, items, config)
        requested = np.array([tgt.record.type_id for _, tgt in items])
        preds = oracle.predict(np.stack(edited))
        match = float(np.mean(preds == requested))
        ssims = [M.ssim_outside_region(img, ref.image, ref.region) for img, (ref, _) in zip(edited, items)]
        mean_ssim = float(np.mean(ssims))
        ok = match >= EDIT_TYPE_MATCH_MIN and mean_ssim >= UNTOUCHED_SSIM_MIN
        report(
            "smoke-editing",
            ok,
            f"type match {match:.2%} (need >= {EDIT_TYPE_MATCH_MIN:.0%}); untouched-region ssim {mean_ssim:.4f} >= {UNTOUCHED_SSIM_MIN}",
        )


# --- criterion 8: ablation ordering ---------------------------------------------------------


class TestAblationOrdering:
    def test_full_model_beats_or_ties_ablations(self, full_run, skip_recon_run, rgb_input_run, desk_data, oracle):
        _, _, test = desk_data
        config = full_run["config"]
        requested = np.array([tgt.record.type_id for _, tgt in edit_items(test, config)])

        def ce_of(ckpt, cfg):
            edited = run_edits(ckpt.generator, edit_items(test, cfg), cfg)
            preds = oracle.predict(np.stack(edited))
            return 100.0 * float(np.mean(preds != requested))

        full_ce = ce_of(full_run["adv"], config)
        skip_ce = ce_of(skip_recon_run, smoke_config(skip_recon_stage=True))
        rgb_ce = ce_of(rgb_input_run, smoke_config(rgb_instead_of_edge=True))
        ok = full_ce <= skip_ce + ABLATION_TIE_BAND and full_ce <= rgb_ce + ABLATION_TIE_BAND
        report(
            "ablation-ordering",
            ok,
            f"C.E. full={full_ce:.1f} <= skip-recon={skip_ce:.1f}+{ABLATION_TIE_BAND} and <= rgb-input={rgb_ce:.1f}+{ABLATION_TIE_BAND}",
        )


# --- criterion 9: leave-one-out ---------------------------------------------------------------


class TestLeaveOneOut:
    def test_one_out_within_band_of_full(self, desk_data, oracle):
        manifest, _, _ = desk_data
        config = smoke_config(recon_iters=200, adv_iters=150)
        result = M.one_out_protocol(config, manifest, held_type=1, classifier=oracle)
        full_ce = result["full"].aggregate["ce"]
        oneout_ce = result["one_out"].aggregate["ce"]
        ok = (oneout_ce >= full_ce - ONE_OUT_LOWER_GUARD) and (oneout_ce <= full_ce + ONE_OUT_UPPER_BAND)
        report(
            "leave-one-out",
            ok,
            f"held-type C.E.: full={full_ce:.1f}, one-out={oneout_ce:.1f}, band -{ONE_OUT_LOWER_GUARD}/+{ONE_OUT_UPPER_BAND}",
        )


# --- criterion 10: service contract -------------------------------------------------------------


class TestServiceContract:
    def test_edit_determinism_and_error_matrix(self, full_run):
        import io
        import json as js

        from fastapi.testclient import TestClient
        from PIL import Image

        from garmentgan.service import ModelState, create_app

        client = TestClient(create_app(ModelState(full_run["adv"])))
        bare = TestClient(create_app(None))

        def png(arr, mode="RGB"):
            buf = io.BytesIO()
            Image.fromarray(arr, mode=mode).save(buf, format="PNG")
            return buf.getvalue()

        rng = np.random.default_rng(11)
        ref = np.full((64, 64, 3), 231, dtype=np.uint8)
        ref[16:60, 12:52] = rng.integers(40, 200, size=3, dtype=np.uint8)
        tgt = np.roll(ref, 3, axis=1)

        def post(client_, **kw):
            files = {k: (f"{k}.png", v, "image/png") for k, v in kw.items() if k in ("reference", "target", "edge") and v is not None}
            data = {"options": js.dumps(kw["options"])} if kw.get("options") else {}
            return client_.post("/v1/edit", files=files, data=data)

        r1 = post(client, reference=png(ref), target=png(tgt))
        r2 = post(client, reference=png(ref), target=png(tgt))
        deterministic = r1.status_code == 200 and r1.json()["edited_image"] == r2.json()["edited_image"]

        e400 = post(client, reference=b"junk", target=png(tgt)).status_code == 400
        e400b = post(client, reference=png(ref)).status_code == 400
        e422 = post(client, reference=png(ref), target=png(tgt), options={"region": [0, 0, 999, 999]}).status_code == 422
        e503 = post(bare, reference=png(ref), target=png(tgt)).status_code == 503
        health = client.get("/v1/health").json()["status"] == "ready"

        ok = deterministic and e400 and e400b and e422 and e503 and health
        report(
            "service-contract",
            ok,
            f"deterministic={deterministic}, 400 decode={e400}, 400 source={e400b}, 422 region={e422}, 503 unloaded={e503}",
        )
