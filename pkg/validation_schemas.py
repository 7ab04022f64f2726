#!/usr/bin/env python3
"""
Schémas de validation pour stabilab
Utilise Marshmallow pour la validation des configurations d'expérience
"""
import numpy as np
from marshmallow import Schema, ValidationError, fields, post_load, validates, validates_schema
from marshmallow.validate import Length, OneOf, Range

from covlab import rgg_pair_radius
from functionals import RegionSpec, StatisticSpec, TestFnSpec
from procgen import SIMPLEX_TOLERANCE, DensitySpec, WindowSpec
from scores import FAMILIES, NAMED_PATTERNS, RadiusRule, ScoreSpec


def _build(factory, *args, **kwargs):
    """Construire un objet du domaine en convertissant ses ValueError en erreurs de validation"""
    try:
        return factory(*args, **kwargs)
    except ValueError as e:
        raise ValidationError(str(e))


class DensitySchema(Schema):
    """Schéma de validation pour la densité g"""
    kind = fields.String(validate=OneOf(['constant', 'affine', 'grid']), load_default='constant')
    value = fields.Float(validate=Range(min=0), load_default=1.0)
    base = fields.Float(load_default=0.0)
    gradient = fields.List(fields.Float(), load_default=list)
    grid_values = fields.Raw(allow_none=True, load_default=None)
    sup_bound = fields.Float(validate=Range(min=0), allow_none=True, load_default=None)

    @post_load
    def make_density(self, data, **kwargs):
        if data['kind'] == 'constant':
            return _build(DensitySpec.constant, data['value'])
        if data['kind'] == 'affine':
            return _build(DensitySpec.affine, data['base'], data['gradient'], data['sup_bound'])
        if data['grid_values'] is None:
            raise ValidationError('grid_values est requis pour une densité sur grille', 'grid_values')
        return _build(DensitySpec.grid, np.asarray(data['grid_values'], dtype=float), data['sup_bound'])


class WindowSchema(Schema):
    """Schéma de validation pour la fenêtre d'observation"""
    dim = fields.Integer(required=True, validate=Range(min=1, max=8),
                         error_messages={'required': 'La dimension est requise'})
    lower = fields.List(fields.Float(), allow_none=True, load_default=None)
    upper = fields.List(fields.Float(), allow_none=True, load_default=None)
    boundary = fields.String(validate=OneOf(['hard', 'torus']), load_default='hard')
    density = fields.Nested(DensitySchema, allow_none=True, load_default=None)

    @post_load
    def make_window(self, data, **kwargs):
        dim = data['dim']
        lower = data['lower'] if data['lower'] is not None else [0.0] * dim
        upper = data['upper'] if data['upper'] is not None else [1.0] * dim
        return _build(WindowSpec, dim, tuple(lower), tuple(upper), data['boundary'],
                      data['density'] or DensitySpec())


class RadiusRuleSchema(Schema):
    """Schéma de validation pour la règle de rayon"""
    kind = fields.String(validate=OneOf(['fixed', 'scaled', 'infinite']), load_default='scaled')
    value = fields.Float(allow_nan=False, allow_none=True, load_default=None)

    @post_load
    def make_rule(self, data, **kwargs):
        if data['kind'] == 'infinite':
            return RadiusRule.infinite()
        if data['value'] is None:
            raise ValidationError('Une valeur de rayon est requise', 'value')
        if data['kind'] == 'fixed':
            return _build(RadiusRule.fixed, data['value'])
        return _build(RadiusRule.scaled, data['value'])


class ScoreSchema(Schema):
    """Schéma de validation pour une entrée du catalogue de scores"""
    family = fields.String(required=True, validate=OneOf(FAMILIES),
                           error_messages={'required': 'La famille de score est requise'})
    k = fields.Integer(validate=Range(min=1), load_default=1)
    q = fields.Float(validate=Range(min=0), load_default=1.0)
    j = fields.Integer(validate=Range(min=0), load_default=1)
    alpha = fields.Float(validate=Range(min=0), load_default=1.0)
    r_rule = fields.Nested(RadiusRuleSchema, allow_none=True, load_default=None)
    pattern = fields.Raw(allow_none=True, load_default=None)
    rescale = fields.Boolean(load_default=True)

    @validates('pattern')
    def validate_pattern(self, value, **kwargs):
        """Motif nommé ou liste d'arêtes [u, v]"""
        if value is None or isinstance(value, str) and value in NAMED_PATTERNS:
            return
        if isinstance(value, str):
            raise ValidationError(f"Motif inconnu: {value} (choix: {', '.join(NAMED_PATTERNS)})")
        if not isinstance(value, list) or not all(isinstance(e, list) and len(e) == 2 for e in value):
            raise ValidationError('Le motif doit être un nom ou une liste de paires [u, v]')

    @post_load
    def make_score(self, data, **kwargs):
        pattern = data.pop('pattern')
        if pattern is not None:
            data['pattern'] = pattern if isinstance(pattern, str) else tuple(tuple(e) for e in pattern)
        return _build(ScoreSpec, **data)


class RegionSchema(Schema):
    """Schéma de validation pour une sous-boîte A"""
    lower = fields.List(fields.Float(), required=True)
    upper = fields.List(fields.Float(), required=True)

    @post_load
    def make_region(self, data, **kwargs):
        return _build(RegionSpec, tuple(data['lower']), tuple(data['upper']))


class TestFnSchema(Schema):
    """Schéma de validation pour la fonction test f"""
    __test__ = False

    kind = fields.String(validate=OneOf(['constant', 'coordinate', 'affine']), load_default='constant')
    c = fields.Float(load_default=1.0)
    index = fields.Integer(validate=Range(min=0), load_default=0)
    base = fields.Float(load_default=0.0)
    gradient = fields.List(fields.Float(), load_default=list)

    @post_load
    def make_testfn(self, data, **kwargs):
        if data['kind'] == 'constant':
            return TestFnSpec.constant(data['c'])
        if data['kind'] == 'coordinate':
            return TestFnSpec.coordinate(data['index'])
        return TestFnSpec.affine(data['base'], data['gradient'])


class StatisticSchema(Schema):
    """Schéma de validation pour une statistique ⟨μ_s, f⟩"""
    name = fields.String(validate=Length(min=1, max=100), allow_none=True, load_default=None)
    score = fields.Nested(ScoreSchema, required=True,
                          error_messages={'required': 'Le score est requis'})
    region = fields.Nested(RegionSchema, allow_none=True, load_default=None)
    testfn = fields.Nested(TestFnSchema, allow_none=True, load_default=None)

    @post_load
    def make_statistic(self, data, **kwargs):
        return StatisticSpec(data['score'], data['region'] or RegionSpec(),
                             data['testfn'] or TestFnSpec(), data['name'])


class MCParamsSchema(Schema):
    """Schéma de validation pour l'estimateur Monte Carlo de Σ"""
    n_x = fields.Integer(validate=Range(min=2), load_default=1024)
    n_radial = fields.Integer(validate=Range(min=1), load_default=12)
    window_ranges = fields.Float(validate=Range(min=0, min_inclusive=False), allow_none=True, load_default=None)
    y_max = fields.Float(validate=Range(min=0, min_inclusive=False), allow_none=True, load_default=None)


class ProbeSchema(Schema):
    """Schéma de validation pour la sonde de stabilisation"""
    statistic = fields.Integer(validate=Range(min=0), load_default=0)
    separations = fields.List(fields.Float(validate=Range(min=0)), required=True, validate=Length(min=1))
    scaled = fields.Boolean(load_default=True)
    reps = fields.Integer(validate=Range(min=1), load_default=200)


class RateFitSchema(Schema):
    """Exposants cibles par courbe"""
    gap = fields.Float(allow_none=True, load_default=None)
    dk = fields.Float(allow_none=True, load_default=None)


class AnalysesSchema(Schema):
    """Schéma de validation pour les analyses demandées"""
    empirical_sigma = fields.Boolean(load_default=True)
    asymptotic_sigma = fields.Boolean(load_default=False)
    gap_curve = fields.String(validate=OneOf(['exact_rgg', 'mc']), allow_none=True, load_default=None)
    dk_vs = fields.String(validate=OneOf(['sigma_s', 'sigma_limit']), allow_none=True, load_default=None)
    stab_probe = fields.Nested(ProbeSchema, allow_none=True, load_default=None)
    rate_fit = fields.Nested(RateFitSchema, allow_none=True, load_default=None)
    mc = fields.Nested(MCParamsSchema, load_default=lambda: MCParamsSchema().load({}))


class ExperimentConfigSchema(Schema):
    """Schéma de validation pour une configuration d'expérience"""
    name = fields.String(validate=Length(min=1, max=100), load_default='experiment')
    window = fields.Nested(WindowSchema, required=True,
                           error_messages={'required': 'La fenêtre est requise'})
    statistics = fields.List(fields.Nested(StatisticSchema), required=True, validate=Length(min=1),
                             error_messages={'required': 'Au moins une statistique est requise'})
    s_grid = fields.List(fields.Float(validate=Range(min=0, min_inclusive=False)),
                         required=True, validate=Length(min=1))
    reps_per_s = fields.Integer(required=True, validate=Range(min=1))
    master_seed = fields.Integer(validate=Range(min=0), allow_none=True, load_default=None)
    probs = fields.List(fields.Float(validate=Range(min=0)), allow_none=True, load_default=None)
    analyses = fields.Nested(AnalysesSchema, load_default=lambda: AnalysesSchema().load({}))
    output_dir = fields.String(allow_none=True, load_default=None)
    parallelism = fields.Integer(validate=Range(min=1), allow_none=True, load_default=None)

    @validates('s_grid')
    def validate_s_grid(self, value, **kwargs):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValidationError('La grille de s doit être strictement croissante')

    @validates('probs')
    def validate_probs(self, value, **kwargs):
        if value is None:
            return
        if not value:
            raise ValidationError('Au moins une probabilité de couleur est requise')
        total = float(np.sum(value))
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise ValidationError(f'Les probabilités de couleurs doivent sommer à 1 (somme: {total!r})')

    @validates_schema
    def validate_experiment(self, data, **kwargs):
        """Contrôles croisés entre fenêtre, statistiques et analyses"""
        window, statistics, analyses = data.get('window'), data.get('statistics'), data.get('analyses')
        if window is None or not statistics:
            return
        errors = {}
        for i, spec in enumerate(statistics):
            try:
                spec.check(window)
            except ValueError as e:
                errors.setdefault(f'statistics.{i}', []).append(str(e))
            if spec.score.family == 'colored_nn' and not data.get('probs'):
                errors.setdefault(f'statistics.{i}', []).append('Le score colored_nn exige des probabilités de couleurs (probs)')

        if analyses:
            needs_sigma = (analyses['asymptotic_sigma'] or analyses['gap_curve'] is not None
                           or analyses['dk_vs'] == 'sigma_limit')
            unscaled = [spec.label for spec in statistics if not spec.score.is_scaled]
            if needs_sigma and unscaled:
                errors['analyses'] = [f"Σ limite réservée aux scores dilatés (non dilatés: {', '.join(unscaled)})"]
            wants_cov = analyses['empirical_sigma'] or analyses['dk_vs'] is not None or analyses['gap_curve'] == 'mc'
            if wants_cov and data.get('reps_per_s', 0) < 2:
                errors['reps_per_s'] = ['Au moins 2 réplications par s sont requises pour une covariance']
            if analyses['gap_curve'] == 'exact_rgg' and (rgg_pair_radius(statistics, window) is None
                                                         or window.is_torus):
                errors['analyses.gap_curve'] = ["Le mode exact exige la paire (V, E) dilatée sur le cube unité à densité 1"]
            probe = analyses.get('stab_probe')
            if probe is not None and probe['statistic'] >= len(statistics):
                errors['analyses.stab_probe.statistic'] = [f"Indice hors limites (m={len(statistics)})"]
        if errors:
            raise ValidationError(errors)


# Fonctions utilitaires pour la validation
def flatten_errors(messages, prefix: str = '') -> list:
    """Aplatir les messages imbriqués de Marshmallow en une liste « champ: message »"""
    if isinstance(messages, dict):
        items = []
        for key, value in messages.items():
            path = f'{prefix}.{key}' if prefix and key != '_schema' else (prefix or str(key))
            items.extend(flatten_errors(value, path))
        return items
    if isinstance(messages, (list, tuple)):
        items = []
        for value in messages:
            items.extend(flatten_errors(value, prefix))
        return items
    return [f'{prefix}: {messages}' if prefix else str(messages)]


def validate_data(schema_class, data, partial=False):
    """
    Valider les données avec un schéma Marshmallow

    Args:
        schema_class: Classe du schéma à utiliser
        data: Données à valider
        partial: Validation partielle

    Returns:
        dict: Données validées ou erreurs
    """
    try:
        schema = schema_class(partial=partial)
        validated_data = schema.load(data)
        return {'valid': True, 'data': validated_data}
    except ValidationError as e:
        return {'valid': False, 'errors': e.messages}


def validate_request(schema_class, request_data, partial=False):
    """
    Valider une configuration et renvoyer les erreurs sous forme de liste

    Returns:
        tuple: (données_validées, erreurs)
    """
    validation_result = validate_data(schema_class, request_data, partial)

    if not validation_result['valid']:
        return None, flatten_errors(validation_result['errors'])

    return validation_result['data'], None
