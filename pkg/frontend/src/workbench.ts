// Edit workbench: pick target/reference/part, slide lambda or epsilon, see
// the edited image, diff heatmap and In/Out-MSE respond after a debounce.

import { ApiClient, ApiError, Catalog, EditResponse, Mode, SampleEntry } from './api.js';
import {
  SLIDER_DEBOUNCE_MS,
  WorkbenchState,
  applyError,
  applyResponse,
  buildEditBody,
  debounce,
  formatMse,
  initialWorkbench,
  partOptions,
  setEpsilon,
  setLambda,
  setMode,
  supportTotal,
} from './state.js';

export class WorkbenchView {
  private state: WorkbenchState;
  private requestEdit: () => void;

  private targetSelect = document.createElement('select');
  private referenceSelect = document.createElement('select');
  private partSelect = document.createElement('select');
  private modeSelect = document.createElement('select');
  private lambdaSlider = document.createElement('input');
  private epsilonSlider = document.createElement('input');
  private sliderReadout = document.createElement('span');
  private editedImg = document.createElement('img');
  private diffImg = document.createElement('img');
  private metricsBox = document.createElement('p');
  private statusBox = document.createElement('p');

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
    catalog: Catalog,
  ) {
    this.state = initialWorkbench(catalog);
    const run = () => {
      void this.submit();
    };
    this.requestEdit = debounce(run, SLIDER_DEBOUNCE_MS);
  }

  setCatalog(catalog: Catalog): void {
    this.state = { ...this.state, epsilonMax: initialWorkbench(catalog).epsilonMax };
    this.fillParts(catalog);
  }

  render(catalog: Catalog, samples: SampleEntry[]): void {
    this.root.replaceChildren();
    const heading = document.createElement('h2');
    heading.textContent = 'Edit workbench';
    this.root.append(heading);

    for (const [select, name] of [
      [this.targetSelect, 'target'],
      [this.referenceSelect, 'reference'],
    ] as const) {
      select.replaceChildren();
      const placeholder = document.createElement('option');
      placeholder.textContent = `pick ${name}…`;
      placeholder.value = '';
      select.append(placeholder);
      for (const sample of samples) {
        const opt = document.createElement('option');
        opt.value = String(sample.id);
        opt.textContent = `sample ${sample.id}`;
        select.append(opt);
      }
    }
    this.fillParts(catalog);

    this.modeSelect.replaceChildren();
    for (const mode of ['sequential', 'simultaneous', 'global'] as Mode[]) {
      const opt = document.createElement('option');
      opt.value = mode;
      opt.textContent = mode;
      this.modeSelect.append(opt);
    }
    this.modeSelect.value = this.state.mode;

    this.lambdaSlider.type = 'range';
    this.lambdaSlider.min = '0';
    this.lambdaSlider.max = '1';
    this.lambdaSlider.step = '0.01';
    this.lambdaSlider.value = String(this.state.lambda);
    this.epsilonSlider.type = 'range';
    this.epsilonSlider.min = '0';
    this.epsilonSlider.max = String(this.state.epsilonMax);
    this.epsilonSlider.step = '0.5';
    this.epsilonSlider.value = String(this.state.epsilon);

    this.targetSelect.addEventListener('change', () => {
      this.state = { ...this.state, target: intOrNull(this.targetSelect.value) };
      this.requestEdit();
    });
    this.referenceSelect.addEventListener('change', () => {
      this.state = { ...this.state, reference: intOrNull(this.referenceSelect.value) };
      this.requestEdit();
    });
    this.partSelect.addEventListener('change', () => {
      this.state = { ...this.state, partId: this.partSelect.value || null };
      this.requestEdit();
    });
    this.modeSelect.addEventListener('change', () => {
      this.state = setMode(this.state, this.modeSelect.value as Mode);
      this.syncSliderVisibility();
      this.requestEdit();
    });
    this.lambdaSlider.addEventListener('input', () => {
      this.state = setLambda(this.state, Number(this.lambdaSlider.value));
      this.syncReadout();
      this.requestEdit();
    });
    this.epsilonSlider.addEventListener('input', () => {
      this.state = setEpsilon(this.state, Number(this.epsilonSlider.value));
      this.syncReadout();
      this.requestEdit();
    });

    const controls = document.createElement('div');
    controls.className = 'controls';
    controls.append(
      labeled('Target', this.targetSelect),
      labeled('Reference', this.referenceSelect),
      labeled('Part', this.partSelect),
      labeled('Mode', this.modeSelect),
      labeled('λ', this.lambdaSlider),
      labeled('ε', this.epsilonSlider),
      this.sliderReadout,
    );
    this.root.append(controls);

    for (const img of [this.editedImg, this.diffImg]) {
      img.width = 160;
      img.height = 160;
      img.style.imageRendering = 'pixelated';
    }
    this.editedImg.alt = 'edited preview';
    this.diffImg.alt = 'diff heatmap';
    const preview = document.createElement('div');
    preview.className = 'preview';
    preview.append(this.editedImg, this.diffImg);
    this.root.append(preview, this.metricsBox, this.statusBox);
    this.syncSliderVisibility();
    this.syncReadout();
  }

  private fillParts(catalog: Catalog): void {
    const current = this.state.partId;
    this.partSelect.replaceChildren();
    const placeholder = document.createElement('option');
    placeholder.textContent = 'pick part…';
    placeholder.value = '';
    this.partSelect.append(placeholder);
    for (const option of partOptions(catalog)) {
      const opt = document.createElement('option');
      opt.value = option.id;
      opt.textContent = option.label;
      this.partSelect.append(opt);
    }
    if (current !== null) this.partSelect.value = current;
  }

  private syncSliderVisibility(): void {
    const sequential = this.state.mode === 'sequential';
    this.epsilonSlider.disabled = !sequential;
    this.lambdaSlider.disabled = sequential;
  }

  private syncReadout(): void {
    this.sliderReadout.textContent =
      this.state.mode === 'sequential'
        ? `ε = ${this.state.epsilon.toFixed(1)}`
        : `λ = ${this.state.lambda.toFixed(2)}`;
  }

  private async submit(): Promise<void> {
    const body = buildEditBody(this.state);
    if (body === null) return;
    this.state = { ...this.state, pending: true };
    this.statusBox.textContent = 'editing…';
    try {
      const resp = await this.client.edit(body);
      this.state = applyResponse(this.state, resp);
      this.showResponse(resp);
    } catch (err) {
      const message =
        err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
      this.state = applyError(this.state, message);
      this.statusBox.textContent = `request failed (${message}); showing last good preview`;
    }
  }

  private showResponse(resp: EditResponse): void {
    this.editedImg.src = `data:image/png;base64,${resp.edited_png_base64}`;
    this.diffImg.src = `data:image/png;base64,${resp.diff_png_base64}`;
    this.metricsBox.textContent =
      `In-MSE ${formatMse(resp.locality.in_mse)} · ` +
      `Out-MSE ${formatMse(resp.locality.out_mse)} · ` +
      `ROI ${(resp.locality.roi_fraction * 100).toFixed(1)}% · ` +
      `q support ${supportTotal(resp)} channels`;
    this.statusBox.textContent = 'ok';
  }
}

function labeled(text: string, el: HTMLElement): HTMLElement {
  const wrap = document.createElement('label');
  wrap.className = 'control';
  const span = document.createElement('span');
  span.textContent = text;
  wrap.append(span, el);
  return wrap;
}

function intOrNull(value: string): number | null {
  return value === '' ? null : Number.parseInt(value, 10);
}
