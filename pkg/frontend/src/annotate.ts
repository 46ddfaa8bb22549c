// Annotation gallery: membership overlays per sample, one label input per
// cluster, and a multi-select merge control that creates parts.

import { ApiClient, ApiError, Catalog } from './api.js';

export interface AnnotateCallbacks {
  onCatalogChange(catalog: Catalog): void;
}

const GALLERY_SAMPLES = 8;

export class AnnotateView {
  private message: HTMLElement;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
    private readonly callbacks: AnnotateCallbacks,
  ) {
    this.message = document.createElement('p');
    this.message.className = 'inline-message';
  }

  render(catalog: Catalog, sampleIds: number[]): void {
    this.root.replaceChildren();
    const heading = document.createElement('h2');
    heading.textContent = 'Clusters';
    this.root.append(heading);

    const gallery = document.createElement('div');
    gallery.className = 'overlay-gallery';
    for (const id of sampleIds.slice(0, GALLERY_SAMPLES)) {
      const img = document.createElement('img');
      img.src = this.client.membershipUrl(id, catalog.base_layer_id);
      img.title = `sample ${id} membership overlay`;
      img.width = 96;
      img.height = 96;
      img.style.imageRendering = 'pixelated';
      gallery.append(img);
    }
    this.root.append(gallery);

    const table = document.createElement('table');
    table.className = 'cluster-table';
    const head = table.insertRow();
    for (const text of ['merge', 'cluster', 'label', 'part']) {
      const th = document.createElement('th');
      th.textContent = text;
      head.append(th);
    }
    const checkboxes = new Map<number, HTMLInputElement>();
    for (const cluster of catalog.clusters) {
      const row = table.insertRow();
      const checkCell = row.insertCell();
      const check = document.createElement('input');
      check.type = 'checkbox';
      check.disabled = cluster.merged_into !== null;
      checkboxes.set(cluster.id, check);
      checkCell.append(check);
      row.insertCell().textContent = String(cluster.id);

      const labelCell = row.insertCell();
      const input = document.createElement('input');
      input.type = 'text';
      input.value = cluster.label;
      input.placeholder = 'label…';
      input.addEventListener('change', () => {
        void this.saveLabel(cluster.id, input.value);
      });
      labelCell.append(input);
      row.insertCell().textContent = cluster.merged_into ?? '—';
    }
    this.root.append(table);

    const mergeRow = document.createElement('div');
    const mergeLabel = document.createElement('input');
    mergeLabel.type = 'text';
    mergeLabel.placeholder = 'new part label';
    const mergeButton = document.createElement('button');
    mergeButton.textContent = 'Merge selected into part';
    mergeButton.addEventListener('click', () => {
      const selected = [...checkboxes.entries()]
        .filter(([, box]) => box.checked)
        .map(([id]) => id);
      void this.mergeClusters(mergeLabel.value || 'part', selected);
    });
    mergeRow.append(mergeLabel, mergeButton);
    this.root.append(mergeRow, this.message);
  }

  private async saveLabel(clusterId: number, label: string): Promise<void> {
    try {
      const catalog = await this.client.setLabel(clusterId, label);
      this.showMessage(`labeled cluster ${clusterId}`);
      this.callbacks.onCatalogChange(catalog);
    } catch (err) {
      this.showError(err);
    }
  }

  private async mergeClusters(label: string, clusterIds: number[]): Promise<void> {
    if (clusterIds.length === 0) {
      this.showMessage('select at least one cluster to merge');
      return;
    }
    try {
      const catalog = await this.client.createPart(label, clusterIds);
      this.showMessage(`created part "${label}"`);
      this.callbacks.onCatalogChange(catalog);
    } catch (err) {
      this.showError(err);
    }
  }

  private showMessage(text: string): void {
    this.message.textContent = text;
    this.message.classList.remove('error');
  }

  private showError(err: unknown): void {
    const text =
      err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
    this.message.textContent = text;
    this.message.classList.add('error');
  }
}
