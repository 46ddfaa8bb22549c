// Typed client for the ganlocal HTTP service. No math happens client-side;
// every number shown in the console comes from these responses.

export type Mode = 'global' | 'simultaneous' | 'sequential';

export interface ClusterInfo {
  id: number;
  label: string;
  merged_into: string | null;
}

export interface PartInfo {
  part_id: string;
  label: string;
  cluster_ids: number[];
}

export interface Catalog {
  base_layer_id: number;
  k: number;
  clusters: ClusterInfo[];
  parts: PartInfo[];
  layers: number[];
  channels: Record<string, number>;
  provenance: Record<string, unknown>;
}

export interface SampleEntry {
  id: number;
  thumbnail: string; // base64 PNG
}

export interface LocalityReport {
  in_mse: number | null;
  out_mse: number | null;
  roi_fraction: number;
}

export interface QueryLayerSummary {
  support: number;
  budget_spent: number | null;
}

export interface EditResponse {
  edited_png_base64: string;
  target_png_base64: string;
  diff_png_base64: string;
  diff_max: number;
  locality: LocalityReport;
  q_summary: Record<string, QueryLayerSummary>;
}

export interface EditRequestBody {
  target: number;
  reference: number;
  part_id: string;
  mode: Mode;
  lambda?: number;
  epsilon?: number;
  rho_ratio?: number;
}

export interface FieldError {
  field: string;
  message: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly fields: FieldError[] = [],
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  imageUrl(sampleId: number): string {
    return `${this.baseUrl}/api/samples/${sampleId}/image`;
  }

  membershipUrl(sampleId: number, layer?: number): string {
    const suffix = layer === undefined ? '' : `?layer=${layer}`;
    return `${this.baseUrl}/api/samples/${sampleId}/membership${suffix}`;
  }

  health(): Promise<{ status: string }> {
    return this.request('GET', '/api/health');
  }

  samples(): Promise<{ samples: SampleEntry[] }> {
    return this.request('GET', '/api/samples');
  }

  catalog(): Promise<Catalog> {
    return this.request('GET', '/api/catalog');
  }

  setLabel(clusterId: number, label: string): Promise<Catalog> {
    return this.request('PUT', '/api/catalog/labels', {
      cluster_id: clusterId,
      label,
    });
  }

  createPart(label: string, clusterIds: number[]): Promise<Catalog> {
    return this.request('POST', '/api/catalog/parts', {
      label,
      cluster_ids: clusterIds,
    });
  }

  edit(body: EditRequestBody): Promise<EditResponse> {
    return this.request('POST', '/api/edit', body);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const data = (payload ?? {}) as { error?: string; message?: string; fields?: FieldError[] };
      const message = data.message ?? data.error ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, message, data.fields ?? []);
    }
    return payload as T;
  }
}
