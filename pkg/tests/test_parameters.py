import pytest

from hctn.exceptions import ConfigurationError
from hctn.parameters import (
    DEFAULT_PARAMS, PARAM_METADATA, Parameters, coerce_value, load_config_file, validate_params,
)


def test_every_default_has_metadata():
    assert [code for _, code in PARAM_METADATA] == list(DEFAULT_PARAMS)


class TestCoercion:
    @pytest.mark.parametrize('key, raw, expected', [
        ('tau', '8', 8),
        ('tau', 8.0, 8),
        ('lr', '0.01', 0.01),
        ('use_gmm', 'off', False),
        ('sparse_graphs', 'Yes', True),
        ('loss', ' mse ', 'mse'),
    ])
    def test_values_take_the_default_type(self, key, raw, expected):
        value = coerce_value(key, raw)
        assert value == expected
        assert type(value) is type(DEFAULT_PARAMS[key])

    @pytest.mark.parametrize('key, raw', [('tau', '2.5'), ('tau', 'eight'), ('use_gmm', 'maybe'), ('lr', 'fast')])
    def test_bad_values(self, key, raw):
        with pytest.raises(ConfigurationError, match=key):
            coerce_value(key, raw)

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown parameter 'taus'"):
            Parameters({'taus': 4})


class TestConfigFile:
    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("# model\n\ntau = 12   # window\nloss=mse\nuse_tgem = false\n", encoding='utf-8')
        assert load_config_file(path) == {'tau': 12, 'loss': 'mse', 'use_tgem': False}

    def test_line_without_equals(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("tau = 4\nf2 128\n", encoding='utf-8')
        with pytest.raises(ConfigurationError, match=':2:'):
            load_config_file(path)

    def test_later_sources_win(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("tau = 12\nseed = 3\n", encoding='utf-8')
        params = Parameters()
        params.set_all(load_config_file(path))
        params.set_all({'seed': '9'})
        assert (params['tau'], params['seed']) == (12, 9)


class TestParamsTable:
    def test_table_round_trip(self):
        params = Parameters({'tau': 12, 'loss': 'mse', 'use_gmm': False, 'lr': 0.005})
        df = params.get_params_df()
        assert list(df.columns) == ['description', 'code_name', 'value']
        assert Parameters.from_df(df).to_dict() == params.to_dict()

    def test_table_read_back_as_strings(self):
        params = Parameters({'freeze_gpam': False, 'gamma': 0.5})
        df = params.get_params_df().astype({'value': str})
        rebuilt = Parameters.from_df(df)
        assert rebuilt['freeze_gpam'] is False
        assert rebuilt['gamma'] == 0.5
        assert rebuilt['tau'] == 8

    def test_copy_is_independent(self):
        params = Parameters()
        other = params.copy()
        other.set('tau', 16)
        assert params['tau'] == 8


class TestValidation:
    def test_defaults_are_valid(self):
        validate_params(Parameters())

    @pytest.mark.parametrize('overrides, message', [
        ({'tau': 6}, 'divisible by 4'),
        ({'tau': 0}, 'tau must be >= 1'),
        ({'f2': 30}, 'f2 must be divisible by 4'),
        ({'heads': 3}, 'heads \\* d_head'),
        ({'layers': 0}, 'layers'),
        ({'kernel_size': 4}, 'kernel_size'),
        ({'gamma': 0.0}, 'gamma'),
        ({'outlier_lambda': 60.0}, 'outlier_lambda'),
        ({'train_fraction': 0.0}, 'train_fraction'),
        ({'dropout': 1.0}, 'dropout'),
        ({'cold_start_mode': 'CX'}, 'cold_start_mode'),
        ({'graph_units': 'third_order'}, 'graph_units'),
        ({'loss': 'huber'}, 'loss'),
    ])
    def test_violations(self, overrides, message):
        with pytest.raises(ConfigurationError, match=message):
            validate_params(Parameters(overrides))

    def test_window_rule_only_with_tgem(self):
        validate_params(Parameters({'tau': 6, 'use_tgem': False}))
